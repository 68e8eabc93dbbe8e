//! Heightfield terrain built from summed features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TerrainFeature {
    Flat,
    /// Raised plateau of `height` for `x ≥ x`.
    Step { height: f64, x: f64 },
    /// Cylinder of `diameter` lying across the path, axis at `x`.
    Pipe { diameter: f64, x: f64 },
    /// Gradient noise of peak `amplitude`. `anisotropy > 1` stretches the
    /// field along y, giving furrows across the direction of travel.
    Noise {
        seed: u64,
        amplitude: f64,
        wavelength: f64,
        #[serde(default = "unit")]
        anisotropy: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl TerrainFeature {
    pub fn validate(&self, path: &str) -> Vec<String> {
        let mut errs = Vec::new();
        let positive = |errs: &mut Vec<String>, name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{path}.{name} must be positive"));
            }
        };
        match *self {
            TerrainFeature::Flat => {}
            TerrainFeature::Step { height, x } => {
                positive(&mut errs, "height", height);
                if !x.is_finite() {
                    errs.push(format!("{path}.x must be finite"));
                }
            }
            TerrainFeature::Pipe { diameter, x } => {
                positive(&mut errs, "diameter", diameter);
                if !x.is_finite() {
                    errs.push(format!("{path}.x must be finite"));
                }
            }
            TerrainFeature::Noise {
                amplitude,
                wavelength,
                anisotropy,
                ..
            } => {
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    errs.push(format!("{path}.amplitude must be non-negative"));
                }
                positive(&mut errs, "wavelength", wavelength);
                positive(&mut errs, "anisotropy", anisotropy);
            }
        }
        errs
    }
}

/// Seeded 2D gradient noise with unit gradients, scaled to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perlin {
    perm: [u8; 512],
    grads: [(f64, f64); 256],
}

impl Perlin {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut base: Vec<u8> = (0..=255).collect();
        base.shuffle(&mut rng);
        let mut perm = [0u8; 512];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = base[i & 255];
        }
        let grads = std::array::from_fn(|_| {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (a.cos(), a.sin())
        });
        Self { perm, grads }
    }

    fn grad(&self, ix: i64, iy: i64, dx: f64, dy: f64) -> f64 {
        let h = self.perm[self.perm[(ix & 255) as usize] as usize + (iy & 255) as usize];
        let (gx, gy) = self.grads[h as usize];
        gx * dx + gy * dy
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (ix, iy) = (x0 as i64, y0 as i64);
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let (u, v) = (fade(fx), fade(fy));
        let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
        let n00 = self.grad(ix, iy, fx, fy);
        let n10 = self.grad(ix + 1, iy, fx - 1.0, fy);
        let n01 = self.grad(ix, iy + 1, fx, fy - 1.0);
        let n11 = self.grad(ix + 1, iy + 1, fx - 1.0, fy - 1.0);
        let n = lerp(lerp(n00, n10, u), lerp(n01, n11, u), v);
        (n * std::f64::consts::SQRT_2).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    features: Vec<TerrainFeature>,
    noise: Vec<Option<Perlin>>,
}

impl Terrain {
    pub fn new(features: Vec<TerrainFeature>) -> Result<Self> {
        let errs: Vec<String> = features
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.validate(&format!("terrain[{i}]")))
            .collect();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let noise = features
            .iter()
            .map(|f| match f {
                TerrainFeature::Noise { seed, .. } => Some(Perlin::new(*seed)),
                _ => None,
            })
            .collect();
        Ok(Self { features, noise })
    }

    pub fn flat() -> Self {
        Self::new(vec![TerrainFeature::Flat]).expect("flat terrain is valid")
    }

    pub fn features(&self) -> &[TerrainFeature] {
        &self.features
    }

    /// Total height of all features at `(x, y)`.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.features
            .iter()
            .zip(&self.noise)
            .map(|(f, n)| match *f {
                TerrainFeature::Flat => 0.0,
                TerrainFeature::Step { height, x: x0 } => {
                    if x >= x0 {
                        height
                    } else {
                        0.0
                    }
                }
                TerrainFeature::Pipe { diameter, x: x0 } => {
                    let r = 0.5 * diameter;
                    let d = x - x0;
                    if d.abs() <= r {
                        r + (r * r - d * d).sqrt()
                    } else {
                        0.0
                    }
                }
                TerrainFeature::Noise {
                    amplitude,
                    wavelength,
                    anisotropy,
                    ..
                } => {
                    let p = n.as_ref().expect("noise feature has a field");
                    amplitude * p.sample(x / wavelength, y / (wavelength * anisotropy))
                }
            })
            .sum()
    }
}

/// Height at `(x, y)`; see [`Terrain::height`].
pub fn terrain_height(terrain: &Terrain, x: f64, y: f64) -> f64 {
    terrain.height(x, y)
}
