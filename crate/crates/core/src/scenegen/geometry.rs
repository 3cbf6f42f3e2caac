//! Vectors, rays and analytic intersections for the renderer.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.length())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// Solid resting on the ground plane `y = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Cuboid { min: Vec3, max: Vec3 },
    /// Vertical cylinder from `y = 0` to `y = height`, capped at the top.
    Cylinder { x: f64, z: f64, radius: f64, height: f64 },
}

const HIT_EPS: f64 = 1e-9;

impl Shape {
    /// Nearest hit distance in `(HIT_EPS, t_max)` and the outward normal.
    pub fn intersect(&self, ray: &Ray, t_max: f64) -> Option<(f64, Vec3)> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(ray.dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [-b - sq, -b + sq].into_iter().find(|&t| t > HIT_EPS && t < t_max)?;
                Some((t, (ray.at(t) - center) * (1.0 / radius)))
            }
            Shape::Cuboid { min, max } => {
                let o = [ray.origin.x, ray.origin.y, ray.origin.z];
                let d = [ray.dir.x, ray.dir.y, ray.dir.z];
                let lo = [min.x, min.y, min.z];
                let hi = [max.x, max.y, max.z];
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut axis0, mut axis1) = (0, 0);
                for a in 0..3 {
                    if d[a] == 0.0 {
                        if o[a] < lo[a] || o[a] > hi[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut near, mut far) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
                    if near > far {
                        std::mem::swap(&mut near, &mut far);
                    }
                    if near > t0 {
                        t0 = near;
                        axis0 = a;
                    }
                    if far < t1 {
                        t1 = far;
                        axis1 = a;
                    }
                }
                if t0 > t1 {
                    return None;
                }
                let (t, axis, sign) = if t0 > HIT_EPS {
                    (t0, axis0, -d[axis0].signum())
                } else {
                    (t1, axis1, d[axis1].signum())
                };
                if t <= HIT_EPS || t >= t_max {
                    return None;
                }
                let mut n = [0.0; 3];
                n[axis] = sign;
                Some((t, vec3(n[0], n[1], n[2])))
            }
            Shape::Cylinder { x, z, radius, height } => {
                let mut best: Option<(f64, Vec3)> = None;
                let (ox, oz) = (ray.origin.x - x, ray.origin.z - z);
                let a = ray.dir.x * ray.dir.x + ray.dir.z * ray.dir.z;
                if a > 0.0 {
                    let b = ox * ray.dir.x + oz * ray.dir.z;
                    let c = ox * ox + oz * oz - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / a, (-b + sq) / a] {
                            let y = ray.origin.y + t * ray.dir.y;
                            if t > HIT_EPS && t < t_max && (0.0..=height).contains(&y) {
                                let p = ray.at(t);
                                best = Some((t, vec3(p.x - x, 0.0, p.z - z) * (1.0 / radius)));
                                break;
                            }
                        }
                    }
                }
                if ray.dir.y != 0.0 {
                    for (cap_y, ny) in [(height, 1.0), (0.0, -1.0)] {
                        let t = (cap_y - ray.origin.y) / ray.dir.y;
                        if t > HIT_EPS && t < best.map_or(t_max, |b| b.0) {
                            let p = ray.at(t);
                            let (dx, dz) = (p.x - x, p.z - z);
                            if dx * dx + dz * dz <= radius * radius {
                                best = Some((t, vec3(0.0, ny, 0.0)));
                            }
                        }
                    }
                }
                best
            }
        }
    }

    /// Horizontal footprint radius around [`Shape::center_xz`].
    pub fn footprint(&self) -> f64 {
        match *self {
            Shape::Sphere { radius, .. } | Shape::Cylinder { radius, .. } => radius,
            Shape::Cuboid { min, max } => 0.5 * ((max.x - min.x).powi(2) + (max.z - min.z).powi(2)).sqrt(),
        }
    }

    pub fn center_xz(&self) -> (f64, f64) {
        match *self {
            Shape::Sphere { center, .. } => (center.x, center.z),
            Shape::Cuboid { min, max } => (0.5 * (min.x + max.x), 0.5 * (min.z + max.z)),
            Shape::Cylinder { x, z, .. } => (x, z),
        }
    }

    /// Lowest point of the solid.
    pub fn bottom(&self) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => center.y - radius,
            Shape::Cuboid { min, .. } => min.y,
            Shape::Cylinder { .. } => 0.0,
        }
    }
}

/// Hit distance of the ground plane `y = 0` from above.
pub fn intersect_ground(ray: &Ray, t_max: f64) -> Option<f64> {
    if ray.dir.y >= 0.0 || ray.origin.y <= 0.0 {
        return None;
    }
    let t = -ray.origin.y / ray.dir.y;
    (t > HIT_EPS && t < t_max).then_some(t)
}
