//! Procedural worlds of primitives on a flat terrain, a ray-cast renderer
//! producing RGB and ground-truth depth, and lighting sweeps on a 1-10 scale.

mod geometry;

pub use geometry::{intersect_ground, vec3, Ray, Shape, Vec3};

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{self, Manifest};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FAR_PLANE: f64 = 80.0;
pub const LEVELS: std::ops::RangeInclusive<u32> = 1..=10;
pub const TRAIN_LEVELS: std::ops::RangeInclusive<u32> = 3..=8;
/// Test world seeds start this far above the split seed.
pub const TEST_SEED_OFFSET: u64 = 1 << 40;
pub const SKY_COLOR: [f64; 3] = [0.55, 0.70, 0.90];
pub const GROUND_ALBEDO: [f64; 3] = [0.50, 0.46, 0.38];

pub fn sun_direction() -> Vec3 {
    vec3(-0.55, 0.6, 0.4).normalized()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LightingMode {
    /// Sun and ambient scaled together.
    Illumination,
    /// Fixed total light, varying sun to ambient ratio.
    Shadows,
}

impl fmt::Display for LightingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LightingMode::Illumination => "illumination",
            LightingMode::Shadows => "shadows",
        })
    }
}

impl FromStr for LightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "illumination" => Ok(LightingMode::Illumination),
            "shadows" => Ok(LightingMode::Shadows),
            _ => Err(Error::Config(format!("unknown lighting mode {s:?} (illumination|shadows)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightingParams {
    pub mode: LightingMode,
    pub level: u32,
    pub sun: f64,
    pub ambient: f64,
    pub sun_direction: Vec3,
}

pub fn lighting_from_level(mode: LightingMode, level: u32) -> Result<LightingParams> {
    if !LEVELS.contains(&level) {
        return Err(Error::invalid("lighting_from_level", format!("level {level} outside 1..=10")));
    }
    let l = level as f64;
    let (sun, ambient) = match mode {
        LightingMode::Illumination => {
            let sun = 0.08 * 2f64.powf((l - 1.0) / 1.5);
            (sun, 0.25 * sun)
        }
        LightingMode::Shadows => {
            let frac = (l - 1.0) / 9.0;
            (frac, 1.0 - frac)
        }
    };
    Ok(LightingParams {
        mode,
        level,
        sun,
        ambient,
        sun_direction: sun_direction(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
}

impl Pose {
    /// Orthonormal pose looking along `forward`, with `up_hint` fixing roll.
    pub fn new(position: Vec3, forward: Vec3, up_hint: Vec3) -> Result<Self> {
        let fl = forward.length();
        if !(position.is_finite() && forward.is_finite() && up_hint.is_finite()) || fl < 1e-12 {
            return Err(Error::invalid("pose", "view direction must be finite and nonzero"));
        }
        let f = forward * (1.0 / fl);
        let right = f.cross(up_hint);
        if right.length() < 1e-9 {
            return Err(Error::invalid("pose", "up vector is parallel to the view direction"));
        }
        let right = right.normalized();
        Ok(Self {
            position,
            forward: f,
            up: right.cross(f),
        })
    }

    /// Heading `yaw` about +y (0 looks along +z) and `pitch` above horizontal.
    pub fn from_yaw_pitch(position: Vec3, yaw: f64, pitch: f64) -> Result<Self> {
        let forward = vec3(yaw.sin() * pitch.cos(), pitch.sin(), yaw.cos() * pitch.cos());
        Self::new(position, forward, vec3(0.0, 1.0, 0.0))
    }

    pub fn right(&self) -> Vec3 {
        self.forward.cross(self.up)
    }
}

/// Pinhole camera with square pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub vfov_deg: f64,
}

impl Camera {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || !width.is_multiple_of(4) || !height.is_multiple_of(4) {
            return Err(Error::invalid(
                "camera",
                format!("resolution {width}x{height} must be nonzero multiples of 4"),
            ));
        }
        Ok(Self {
            width,
            height,
            vfov_deg: 45.0,
        })
    }

    /// Ray through continuous image coordinates `(u, v)`, measured in pixels
    /// from the top-left corner; the image center is the optical axis.
    pub fn ray(&self, pose: &Pose, u: f64, v: f64) -> Ray {
        let per_px = (self.vfov_deg.to_radians() * 0.5).tan() / (self.height as f64 * 0.5);
        let x = (u - self.width as f64 * 0.5) * per_px;
        let y = (self.height as f64 * 0.5 - v) * per_px;
        Ray {
            origin: pose.position,
            dir: (pose.forward + pose.right() * x + pose.up * y).normalized(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Object {
    pub shape: Shape,
    pub albedo: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub frames: usize,
    pub objects: usize,
    pub camera_height: f64,
    pub pitch: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Largest heading change per frame, radians.
    pub max_turn: f64,
    /// Clearance between the camera path and any object surface.
    pub margin: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            frames: 20,
            objects: 40,
            camera_height: 1.5,
            pitch: -0.08,
            min_speed: 0.25,
            max_speed: 0.5,
            max_turn: 0.06,
            margin: 1.2,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 10 {
            return Err(Error::Config(format!("worlds need at least 10 frames, got {}", self.frames)));
        }
        if !(0.0 < self.min_speed && self.min_speed <= self.max_speed) || !(self.camera_height > 0.0) {
            return Err(Error::Config("speeds must satisfy 0 < min <= max and camera height > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub objects: Vec<Object>,
    pub trajectory: Vec<Pose>,
}

/// Builds a world: a smooth camera path first, then primitives placed
/// around it with a clearance margin.
pub fn generate_scene(seed: u64, cfg: &SceneConfig) -> Result<SceneSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut yaw = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut turn = 0.0;
    let mut speed = rng.gen_range(cfg.min_speed..=cfg.max_speed);
    let mut pos = vec3(0.0, cfg.camera_height, 0.0);
    let mut trajectory = Vec::with_capacity(cfg.frames);
    for _ in 0..cfg.frames {
        trajectory.push(Pose::from_yaw_pitch(pos, yaw, cfg.pitch)?);
        // Low-pass filtered turn rate and speed keep the path C1-smooth.
        turn = 0.8 * turn + 0.2 * rng.gen_range(-cfg.max_turn..=cfg.max_turn);
        speed = (0.8 * speed + 0.2 * rng.gen_range(cfg.min_speed..=cfg.max_speed)).clamp(cfg.min_speed, cfg.max_speed);
        yaw += turn;
        pos = pos + vec3(yaw.sin(), 0.0, yaw.cos()) * speed;
    }
    // Anchor points along the path, extended ahead so the last frames still
    // look at populated ground.
    let last = trajectory[cfg.frames - 1];
    let ahead = vec3(last.forward.x, 0.0, last.forward.z).normalized();
    let mut anchors: Vec<Vec3> = trajectory.iter().map(|p| p.position).collect();
    anchors.extend((1..=10).map(|k| last.position + ahead * (2.0 * k as f64)));

    let mut objects = Vec::with_capacity(cfg.objects);
    let mut attempts = 0;
    while objects.len() < cfg.objects && attempts < cfg.objects * 50 {
        attempts += 1;
        let anchor = anchors[rng.gen_range(0..anchors.len())];
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let dist = rng.gen_range(1.5..14.0);
        let (cx, cz) = (anchor.x + angle.cos() * dist, anchor.z + angle.sin() * dist);
        let shape = match rng.gen_range(0..3) {
            0 => {
                let r = rng.gen_range(0.4..1.4);
                Shape::Sphere {
                    center: vec3(cx, r, cz),
                    radius: r,
                }
            }
            1 => {
                let (hx, hz) = (rng.gen_range(0.3..1.4), rng.gen_range(0.3..1.4));
                let h = rng.gen_range(0.5..3.0);
                Shape::Cuboid {
                    min: vec3(cx - hx, 0.0, cz - hz),
                    max: vec3(cx + hx, h, cz + hz),
                }
            }
            _ => Shape::Cylinder {
                x: cx,
                z: cz,
                radius: rng.gen_range(0.3..1.0),
                height: rng.gen_range(0.8..3.5),
            },
        };
        let albedo = [
            rng.gen_range(0.15..0.95),
            rng.gen_range(0.15..0.95),
            rng.gen_range(0.15..0.95),
        ];
        let clear = cfg.margin + shape.footprint();
        if trajectory
            .iter()
            .all(|p| (p.position.x - cx).hypot(p.position.z - cz) > clear)
        {
            objects.push(Object { shape, albedo });
        }
    }
    Ok(SceneSpec {
        seed,
        objects,
        trajectory,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    /// `[1,3,H,W]` in `[0,1]`.
    pub rgb: Tensor<f32>,
    /// `[1,1,H,W]` distance along each pixel's ray, clamped to the far plane.
    pub depth: Tensor<f32>,
}

enum Hit {
    Ground,
    Object(usize, Vec3),
}

fn nearest_hit(scene: &SceneSpec, ray: &Ray) -> Option<(f64, Hit)> {
    let mut best = intersect_ground(ray, FAR_PLANE).map(|t| (t, Hit::Ground));
    for (i, o) in scene.objects.iter().enumerate() {
        let t_max = best.as_ref().map_or(FAR_PLANE, |b| b.0);
        if let Some((t, n)) = o.shape.intersect(ray, t_max) {
            best = Some((t, Hit::Object(i, n)));
        }
    }
    best
}

fn occluded(scene: &SceneSpec, ray: &Ray) -> bool {
    scene
        .objects
        .iter()
        .any(|o| o.shape.intersect(ray, f64::INFINITY).is_some())
}

/// Renders one frame. With `shadows` false the visibility term is forced
/// to 1, which isolates the effect of shadow rays.
pub fn render_frame_with(
    scene: &SceneSpec,
    pose: &Pose,
    lighting: &LightingParams,
    camera: &Camera,
    shadows: bool,
) -> Result<RenderedFrame> {
    let pose = Pose::new(pose.position, pose.forward, pose.up)?;
    let (w, h) = (camera.width, camera.height);
    let plane = w * h;
    let mut rgb = vec![0.0f32; 3 * plane];
    let mut depth = vec![FAR_PLANE as f32; plane];
    let l = lighting.sun_direction;
    for y in 0..h {
        for x in 0..w {
            let ray = camera.ray(&pose, x as f64 + 0.5, y as f64 + 0.5);
            let idx = y * w + x;
            let color = match nearest_hit(scene, &ray) {
                None => SKY_COLOR,
                Some((t, hit)) => {
                    depth[idx] = t as f32;
                    let (n, albedo) = match hit {
                        Hit::Ground => (vec3(0.0, 1.0, 0.0), GROUND_ALBEDO),
                        Hit::Object(i, n) => (n, scene.objects[i].albedo),
                    };
                    let lambert = n.dot(l).max(0.0);
                    let mut direct = lighting.sun * lambert;
                    if shadows && direct > 0.0 {
                        let shadow = Ray {
                            origin: ray.at(t) + n * 1e-6,
                            dir: l,
                        };
                        if occluded(scene, &shadow) {
                            direct = 0.0;
                        }
                    }
                    albedo.map(|a| a * (lighting.ambient + direct))
                }
            };
            for c in 0..3 {
                rgb[c * plane + idx] = color[c].clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(RenderedFrame {
        rgb: Tensor::new(&[1, 3, h, w], rgb)?,
        depth: Tensor::new(&[1, 1, h, w], depth)?,
    })
}

pub fn render_frame(scene: &SceneSpec, pose: &Pose, lighting: &LightingParams, camera: &Camera) -> Result<RenderedFrame> {
    render_frame_with(scene, pose, lighting, camera, true)
}

/// Renders every pose of a world's trajectory.
pub fn render_sequence(scene: &SceneSpec, lighting: &LightingParams, camera: &Camera) -> Result<Vec<RenderedFrame>> {
    scene
        .trajectory
        .iter()
        .map(|p| render_frame(scene, p, lighting, camera))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Test,
}

impl FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "test" => Ok(SplitKind::Test),
            _ => Err(Error::Config(format!("unknown split {s:?} (train|test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitConfig {
    pub kind: SplitKind,
    pub mode: LightingMode,
    pub worlds: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub fps: u32,
    pub scene: SceneConfig,
}

impl SplitConfig {
    /// Defaults: 60 training worlds of 20 frames, or 10 test worlds.
    pub fn new(kind: SplitKind, mode: LightingMode, seed: u64) -> Self {
        Self {
            kind,
            mode,
            worlds: if kind == SplitKind::Train { 60 } else { 10 },
            width: 64,
            height: 32,
            seed,
            fps: 10,
            scene: SceneConfig::default(),
        }
    }

    pub fn world_seeds(&self) -> Range<u64> {
        let start = match self.kind {
            SplitKind::Train => self.seed,
            SplitKind::Test => self.seed.wrapping_add(TEST_SEED_OFFSET),
        };
        start..start.saturating_add(self.worlds as u64)
    }

    /// Lighting level of training world `world_seed`, uniform over 3..=8.
    pub fn train_level(world_seed: u64) -> u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(world_seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.gen_range(TRAIN_LEVELS)
    }

    /// `(directory name, world seed, lighting level)` for every sequence.
    pub fn plan(&self) -> Vec<(String, u64, u32)> {
        let mut out = Vec::new();
        for (i, seed) in self.world_seeds().enumerate() {
            match self.kind {
                SplitKind::Train => out.push((format!("world_{i:04}"), seed, Self::train_level(seed))),
                SplitKind::Test => {
                    for level in LEVELS {
                        out.push((format!("world_{i:04}_level_{level:02}"), seed, level));
                    }
                }
            }
        }
        out
    }
}

pub fn ensure_disjoint(a: &SplitConfig, b: &SplitConfig) -> Result<()> {
    let (ra, rb) = (a.world_seeds(), b.world_seeds());
    if ra.start < rb.end && rb.start < ra.end {
        return Err(Error::Config(format!(
            "world seed ranges overlap: {}..{} and {}..{}",
            ra.start, ra.end, rb.start, rb.end
        )));
    }
    Ok(())
}

/// Renders a split into `out` as one sequence directory per (world, level)
/// plus an index file. Refuses a non-empty `out` unless `force` is set.
pub fn generate_split(cfg: &SplitConfig, out: &Path, force: bool) -> Result<Vec<String>> {
    if cfg.worlds == 0 {
        return Err(Error::Config("a split needs at least one world".into()));
    }
    cfg.scene.validate()?;
    let camera = Camera::new(cfg.width, cfg.height)?;
    if out.exists() {
        let mut entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
        if entries.next().is_some() && !force {
            return Err(Error::Config(format!(
                "{} exists and is not empty (use --force to overwrite)",
                out.display()
            )));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut names = Vec::new();
    let mut cached: Option<(u64, SceneSpec)> = None;
    for (name, seed, level) in cfg.plan() {
        let scene = match &cached {
            Some((s, scene)) if *s == seed => scene.clone(),
            _ => {
                let scene = generate_scene(seed, &cfg.scene)?;
                cached = Some((seed, scene.clone()));
                scene
            }
        };
        let lighting = lighting_from_level(cfg.mode, level)?;
        let frames = render_sequence(&scene, &lighting, &camera)?;
        let manifest = Manifest {
            world_seed: seed,
            lighting_mode: cfg.mode,
            lighting_level: level,
            frame_count: frames.len(),
            width: cfg.width,
            height: cfg.height,
            fps: cfg.fps,
        };
        let (rgb, depth): (Vec<_>, Vec<_>) = frames.into_iter().map(|f| (f.rgb, f.depth)).unzip();
        dataio::write_sequence(&out.join(&name), &manifest, &rgb, &depth)?;
        names.push(name);
    }
    dataio::write_index(out, &names)?;
    Ok(names)
}
