//! On-disk formats: binary PPM frames, little-endian PFM depth maps,
//! sequence directories with a key=value manifest, and checkpoints.
//! Byte layouts are described in `docs/FORMATS.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::pcnet::{NetConfig, PreludeNet};
use crate::scenegen::LightingMode;
use crate::tensor::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCN1";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const INDEX_FILE: &str = "index.txt";

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn malformed(format: &'static str, offset: usize, msg: impl Into<String>) -> Error {
    Error::Malformed {
        format,
        offset: offset as u64,
        msg: msg.into(),
    }
}

/// Extents of a single image stored as `[1,C,H,W]` or `[C,H,W]`.
fn image_dims(t: &Tensor<f32>, channels: usize, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [1, c, h, w] | [c, h, w] if c == channels => Ok((h, w)),
        _ => Err(Error::invalid(
            op,
            format!("expected a single {channels}-channel image, got shape {:?}", t.shape()),
        )),
    }
}

/// Whitespace-separated header tokens; `#` starts a comment running to the
/// end of the line. Returns the tokens and the offset just past the single
/// whitespace byte that terminates the last one.
fn header_tokens(bytes: &[u8], count: usize, format: &'static str) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        match bytes.get(i) {
            None => return Err(malformed(format, i, "header ends early")),
            Some(b'#') => {
                while bytes.get(i).is_some_and(|&b| b != b'\n') {
                    i += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => i += 1,
            Some(_) => {
                let start = i;
                while bytes.get(i).is_some_and(|b| !b.is_ascii_whitespace()) {
                    i += 1;
                }
                let tok = std::str::from_utf8(&bytes[start..i]).map_err(|_| malformed(format, start, "non-ASCII header"))?;
                tokens.push(tok.to_string());
                if tokens.len() == count {
                    if !bytes.get(i).is_some_and(|b| b.is_ascii_whitespace()) {
                        return Err(malformed(format, i, "header must end with one whitespace byte"));
                    }
                    i += 1;
                }
            }
        }
    }
    Ok((tokens, i))
}

fn parse_extent(tok: &str, format: &'static str, offset: usize) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(malformed(format, offset, format!("invalid extent {tok:?}"))),
    }
}

pub fn encode_ppm(rgb: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w) = image_dims(rgb, 3, "write_ppm")?;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    let d = rgb.data();
    out.reserve(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            let v = d[c * plane + p];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("write_ppm", format!("value {v} outside [0, 1]")));
            }
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// Decodes a binary PPM with maxval 255 into `[1,3,H,W]` values in `[0,1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let (tok, start) = header_tokens(bytes, 4, "ppm")?;
    if tok[0] != "P6" {
        return Err(malformed("ppm", 0, format!("magic {:?}, expected P6", tok[0])));
    }
    let w = parse_extent(&tok[1], "ppm", 2)?;
    let h = parse_extent(&tok[2], "ppm", 2)?;
    if tok[3] != "255" {
        return Err(Error::Unsupported {
            format: "ppm",
            msg: format!("maxval {} (only 255 is supported)", tok[3]),
        });
    }
    let plane = h * w;
    let payload = &bytes[start..];
    if payload.len() < 3 * plane {
        return Err(malformed("ppm", bytes.len(), format!("payload truncated: {} of {} bytes", payload.len(), 3 * plane)));
    }
    if payload.len() > 3 * plane {
        return Err(malformed("ppm", start + 3 * plane, "trailing bytes after payload"));
    }
    let mut data = vec![0.0f32; 3 * plane];
    for p in 0..plane {
        for c in 0..3 {
            data[c * plane + p] = payload[3 * p + c] as f32 / 255.0;
        }
    }
    Tensor::new(&[1, 3, h, w], data)
}

pub fn write_ppm(path: &Path, rgb: &Tensor<f32>) -> Result<()> {
    write_file(path, &encode_ppm(rgb)?)
}

pub fn read_ppm(path: &Path) -> Result<Tensor<f32>> {
    decode_ppm(&read_file(path)?)
}

pub fn encode_pfm(depth: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w) = image_dims(depth, 1, "write_pfm")?;
    let d = depth.data();
    if let Some(v) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid("write_pfm", format!("depth must be finite and positive, got {v}")));
    }
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * h * w);
    for y in (0..h).rev() {
        for v in &d[y * w..(y + 1) * w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a single-channel little-endian PFM into `[1,1,H,W]`, top row first.
pub fn decode_pfm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let (tok, start) = header_tokens(bytes, 4, "pfm")?;
    match tok[0].as_str() {
        "Pf" => {}
        "PF" => {
            return Err(Error::Unsupported {
                format: "pfm",
                msg: "three-channel PF files".into(),
            })
        }
        m => return Err(malformed("pfm", 0, format!("magic {m:?}, expected Pf"))),
    }
    let w = parse_extent(&tok[1], "pfm", 2)?;
    let h = parse_extent(&tok[2], "pfm", 2)?;
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| malformed("pfm", start - 1, format!("invalid scale {:?}", tok[3])))?;
    if scale > 0.0 {
        return Err(Error::Unsupported {
            format: "pfm",
            msg: "big-endian payload (positive scale)".into(),
        });
    }
    if !(scale < 0.0) {
        return Err(malformed("pfm", start - 1, "scale must be nonzero"));
    }
    let payload = &bytes[start..];
    let need = 4 * h * w;
    if payload.len() < need {
        return Err(malformed("pfm", bytes.len(), format!("payload truncated: {} of {need} bytes", payload.len())));
    }
    if payload.len() > need {
        return Err(malformed("pfm", start + need, "trailing bytes after payload"));
    }
    let mut data = vec![0.0f32; h * w];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let (row, x) = (i / w, i % w);
        data[(h - 1 - row) * w + x] = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    Tensor::new(&[1, 1, h, w], data)
}

pub fn write_pfm(path: &Path, depth: &Tensor<f32>) -> Result<()> {
    write_file(path, &encode_pfm(depth)?)
}

pub fn read_pfm(path: &Path) -> Result<Tensor<f32>> {
    decode_pfm(&read_file(path)?)
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn encode_checkpoint(params: &ParamStore<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + 4 * params.num_values());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    // ParamStore iterates in lexicographic name order.
    for (name, t) in params.iter() {
        if !t.is_finite() {
            return Err(Error::NonFinite {
                what: format!("checkpoint tensor {name}"),
            });
        }
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| malformed("checkpoint", self.pos, format!("need {n} more bytes")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamStore<f32>> {
    if bytes.len() < 20 {
        return Err(malformed("checkpoint", bytes.len(), "file too short"));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(malformed("checkpoint", 0, "bad magic"));
    }
    let body = &bytes[..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let computed = fnv64(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Unsupported {
            format: "checkpoint",
            msg: format!("version {version}, expected {CHECKPOINT_VERSION}"),
        });
    }
    let count = r.u32()?;
    let mut params = ParamStore::new();
    let mut prev: Option<String> = None;
    for _ in 0..count {
        let at = r.pos;
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| malformed("checkpoint", at + 4, "tensor name is not UTF-8"))?
            .to_string();
        if prev.as_ref().is_some_and(|p| *p >= name) {
            return Err(malformed("checkpoint", at, format!("tensor {name:?} out of order or duplicated")));
        }
        let rank = r.u32()? as usize;
        if !(1..=4).contains(&rank) {
            return Err(malformed("checkpoint", r.pos - 4, format!("rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e)).unwrap_or(usize::MAX);
        let payload = r.take(numel.saturating_mul(4))?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| malformed("checkpoint", at, e.to_string()))?;
        if !t.is_finite() {
            return Err(Error::NonFinite {
                what: format!("checkpoint tensor {name}"),
            });
        }
        params.insert(name.clone(), t);
        prev = Some(name);
    }
    if r.pos != body.len() {
        return Err(malformed("checkpoint", r.pos, "trailing bytes before checksum"));
    }
    Ok(params)
}

pub fn save_checkpoint(net: &PreludeNet<f32>, path: &Path) -> Result<()> {
    write_file(path, &encode_checkpoint(net.params())?)
}

/// Loads a checkpoint and infers the network layout from its tensors.
pub fn load_checkpoint(path: &Path) -> Result<PreludeNet<f32>> {
    let params = decode_checkpoint(&read_file(path)?)?;
    let config = NetConfig::infer(&params)?;
    PreludeNet::from_params(config, params)
}

/// Loads a checkpoint into a network of a fixed layout.
pub fn load_checkpoint_as(config: NetConfig, path: &Path) -> Result<PreludeNet<f32>> {
    PreludeNet::from_params(config, decode_checkpoint(&read_file(path)?)?)
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// ignored; duplicate keys and lines without `=` are rejected.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
        }
    }
    Ok(out)
}

/// Removes `key` from a parsed config and parses it.
pub fn take_value<V: std::str::FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<V>>
where
    V::Err: std::fmt::Display,
{
    map.remove(key)
        .map(|s| {
            s.parse::<V>()
                .map_err(|e| Error::Config(format!("{key}: cannot parse {s:?}: {e}")))
        })
        .transpose()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub world_seed: u64,
    pub lighting_mode: LightingMode,
    pub lighting_level: u32,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub fps: u32,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "world_seed={}", self.world_seed).unwrap();
        writeln!(s, "lighting_mode={}", self.lighting_mode).unwrap();
        writeln!(s, "lighting_level={}", self.lighting_level).unwrap();
        writeln!(s, "frame_count={}", self.frame_count).unwrap();
        writeln!(s, "width={}", self.width).unwrap();
        writeln!(s, "height={}", self.height).unwrap();
        writeln!(s, "fps={}", self.fps).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = parse_key_values(text)?;
        let mut req = |key: &str| -> Result<String> {
            map.remove(key)
                .ok_or_else(|| Error::Dataset(format!("manifest is missing {key}")))
        };
        fn num<V: std::str::FromStr>(key: &str, s: String) -> Result<V> {
            s.parse()
                .map_err(|_| Error::Dataset(format!("manifest {key}: cannot parse {s:?}")))
        }
        let m = Manifest {
            world_seed: num("world_seed", req("world_seed")?)?,
            lighting_mode: req("lighting_mode")?.parse()?,
            lighting_level: num("lighting_level", req("lighting_level")?)?,
            frame_count: num("frame_count", req("frame_count")?)?,
            width: num("width", req("width")?)?,
            height: num("height", req("height")?)?,
            fps: num("fps", req("fps")?)?,
        };
        if let Some(k) = map.keys().next() {
            return Err(Error::Dataset(format!("manifest has unknown key {k}")));
        }
        Ok(m)
    }
}

pub fn frame_file(i: usize) -> String {
    format!("frame_{i:04}.ppm")
}

pub fn depth_file(i: usize) -> String {
    format!("depth_{i:04}.pfm")
}

/// One rendered sequence held in memory: frames `[1,3,H,W]`, depths `[1,1,H,W]`.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub name: String,
    pub manifest: Manifest,
    pub frames: Vec<Tensor<f32>>,
    pub depths: Vec<Tensor<f32>>,
}

pub fn write_sequence(dir: &Path, manifest: &Manifest, frames: &[Tensor<f32>], depths: &[Tensor<f32>]) -> Result<()> {
    if frames.len() != manifest.frame_count || depths.len() != manifest.frame_count {
        return Err(Error::Dataset(format!(
            "manifest declares {} frames, got {} images and {} depth maps",
            manifest.frame_count,
            frames.len(),
            depths.len()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, (f, d)) in frames.iter().zip(depths).enumerate() {
        write_ppm(&dir.join(frame_file(i)), f)?;
        write_pfm(&dir.join(depth_file(i)), d)?;
    }
    write_file(&dir.join(MANIFEST_FILE), manifest.to_text().as_bytes())
}

pub fn read_sequence(dir: &Path) -> Result<Sequence> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = String::from_utf8(read_file(&manifest_path)?)
        .map_err(|_| Error::Dataset(format!("{} is not UTF-8", manifest_path.display())))?;
    let manifest = Manifest::parse(&text)?;
    let mut frames = Vec::with_capacity(manifest.frame_count);
    let mut depths = Vec::with_capacity(manifest.frame_count);
    let want = [1, 1, manifest.height, manifest.width];
    for i in 0..manifest.frame_count {
        let f = read_ppm(&dir.join(frame_file(i)))?;
        let d = read_pfm(&dir.join(depth_file(i)))?;
        if f.shape()[2..] != want[2..] || d.shape() != want {
            return Err(Error::Dataset(format!(
                "{}: frame {i} has extents {:?}/{:?}, manifest says {}x{}",
                dir.display(),
                f.shape(),
                d.shape(),
                manifest.width,
                manifest.height
            )));
        }
        frames.push(f);
        depths.push(d);
    }
    let n = manifest.frame_count;
    if dir.join(frame_file(n)).exists() || dir.join(depth_file(n)).exists() {
        return Err(Error::Dataset(format!(
            "{}: more files present than the manifest's {n} frames",
            dir.display()
        )));
    }
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Sequence {
        name,
        manifest,
        frames,
        depths,
    })
}

pub fn write_index(root: &Path, names: &[String]) -> Result<()> {
    let mut s = String::new();
    for n in names {
        s.push_str(n);
        s.push('\n');
    }
    write_file(&root.join(INDEX_FILE), s.as_bytes())
}

pub fn read_index(root: &Path) -> Result<Vec<PathBuf>> {
    let path = root.join(INDEX_FILE);
    let text = String::from_utf8(read_file(&path)?).map_err(|_| Error::Dataset(format!("{} is not UTF-8", path.display())))?;
    let dirs: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| root.join(l))
        .collect();
    if dirs.is_empty() {
        return Err(Error::Dataset(format!("{} lists no sequences", path.display())));
    }
    Ok(dirs)
}

/// Loads every sequence listed in a dataset root's index.
pub fn load_dataset(root: &Path) -> Result<Vec<Sequence>> {
    read_index(root)?.iter().map(|d| read_sequence(d)).collect()
}
