//! Stationary wind: a first-order Gauss–Markov recursion per axis.
//!
//! With lag-one correlation `rho_c` between consecutive slots and marginal
//! standard deviation `sigma_f`, each axis follows
//!
//! ```text
//! w[n+1] = mean + rho_c (w[n] - mean) + sigma_f sqrt(1 - rho_c^2) z,  z ~ N(0, 1)
//! ```
//!
//! which keeps the per-axis variance at exactly `sigma_f^2` once started
//! from the stationary law.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::vector::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindModel {
    pub mean: Vec2,
    pub sigma_f: f64,
    pub rho_c: f64,
}

impl WindModel {
    pub fn fixed(mean: Vec2) -> Self {
        Self {
            mean,
            sigma_f: 0.0,
            rho_c: 0.0,
        }
    }

    /// Wind model blowing towards `heading_deg` (0 = +x, 90 = +y) at `speed`.
    pub fn towards(heading_deg: f64, speed: f64, sigma_f: f64, rho_c: f64) -> Self {
        Self {
            mean: Vec2::from_angle(heading_deg.to_radians()) * speed,
            sigma_f,
            rho_c,
        }
    }
}

/// One slot of the recursion. `noise` holds two standard-normal draws.
pub fn step(model: &WindModel, current: Vec2, noise: [f64; 2]) -> Vec2 {
    let keep = model.rho_c;
    let shock = model.sigma_f * (1.0 - keep * keep).sqrt();
    model.mean + (current - model.mean) * keep + Vec2::new(noise[0], noise[1]) * shock
}

/// Per-slot wind vectors for one realisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindPath {
    pub samples: Vec<Vec2>,
    pub seed: u64,
}

impl WindPath {
    pub fn constant(w: Vec2, len: usize) -> Self {
        Self {
            samples: vec![w; len],
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut body = String::from("slot,wx,wy\n");
        for (n, w) in self.samples.iter().enumerate() {
            body.push_str(&format!("{n},{},{}\n", w.x, w.y));
        }
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, seed: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        message: format!("bad wind row {rec:?}"),
                    })
            };
            samples.push(Vec2::new(get(1)?, get(2)?));
        }
        Ok(Self { samples, seed })
    }
}

fn draw(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [StandardNormal.sample(rng), StandardNormal.sample(rng)]
}

/// Deterministic realisation of `length` slots; slot 0 is drawn from the
/// stationary law.
pub fn sample_path(model: &WindModel, length: usize, seed: u64) -> WindPath {
    assert!(length >= 1, "wind path needs at least one slot");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(length);
    let z = draw(&mut rng);
    let mut w = model.mean + Vec2::new(z[0], z[1]) * model.sigma_f;
    samples.push(w);
    for _ in 1..length {
        w = step(model, w, draw(&mut rng));
        samples.push(w);
    }
    WindPath { samples, seed }
}

/// `count` independent paths; path `i` uses seed `seed + i`.
pub fn saa_samples(model: &WindModel, length: usize, count: usize, seed: u64, exec: Exec) -> Vec<WindPath> {
    assert!(count >= 1, "need at least one sample path");
    let seeds: Vec<u64> = (0..count as u64).map(|i| seed.wrapping_add(i)).collect();
    exec.map(&seeds, |&s| sample_path(model, length, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(sigma: f64, rho: f64) -> WindModel {
        WindModel {
            mean: Vec2::new(0.0, 10.0),
            sigma_f: sigma,
            rho_c: rho,
        }
    }

    #[test]
    fn degenerate_noise_converges_to_mean() {
        let m = model(0.0, 0.5);
        assert_eq!(step(&m, m.mean, [1.0, -2.0]), m.mean);
        let mut w = Vec2::new(5.0, -5.0);
        let mut gap = (w - m.mean).norm();
        for _ in 0..60 {
            w = step(&m, w, [0.3, 0.7]);
            let g = (w - m.mean).norm();
            assert!(g <= 0.5 * gap + 1e-15);
            gap = g;
        }
        assert!(gap < 1e-12);
    }

    #[test]
    fn memoryless_case_ignores_current() {
        let m = model(2.0, 0.0);
        let a = step(&m, Vec2::new(100.0, 100.0), [0.5, -1.0]);
        let b = step(&m, Vec2::new(-3.0, 4.0), [0.5, -1.0]);
        assert_eq!(a, b);
        assert_eq!(a, m.mean + Vec2::new(1.0, -2.0));
    }

    #[test]
    fn stationary_variance_monte_carlo() {
        let m = WindModel {
            mean: Vec2::ZERO,
            sigma_f: 1.0,
            rho_c: 0.5,
        };
        let p = sample_path(&m, 1_000_000, 11);
        let n = p.len() as f64;
        let (mx, my) = p
            .samples
            .iter()
            .fold((0.0, 0.0), |(a, b), w| (a + w.x, b + w.y));
        let (mx, my) = (mx / n, my / n);
        let vx = p.samples.iter().map(|w| (w.x - mx).powi(2)).sum::<f64>() / n;
        let vy = p.samples.iter().map(|w| (w.y - my).powi(2)).sum::<f64>() / n;
        assert!((vx - 1.0).abs() < 0.01, "var x {vx}");
        assert!((vy - 1.0).abs() < 0.01, "var y {vy}");

        // lag-one autocorrelation
        let cov = p
            .samples
            .windows(2)
            .map(|w| (w[0].x - mx) * (w[1].x - mx))
            .sum::<f64>()
            / (n - 1.0);
        assert!((cov / vx - 0.5).abs() < 0.01, "rho {}", cov / vx);
    }

    #[test]
    fn paths_are_deterministic() {
        let m = model(1.0, 0.5);
        assert_eq!(sample_path(&m, 50, 7), sample_path(&m, 50, 7));
        assert_ne!(sample_path(&m, 50, 7), sample_path(&m, 50, 8));
        let c = sample_path(&model(0.0, 0.5), 20, 3);
        assert!(c.samples.iter().all(|w| *w == Vec2::new(0.0, 10.0)));
    }

    #[test]
    fn saa_count_and_clt() {
        let m = model(1.0, 0.5);
        assert_eq!(saa_samples(&m, 10, 100, 1, Exec::Sequential).len(), 100);
        let one = saa_samples(&model(0.0, 0.5), 10, 1, 1, Exec::Sequential);
        assert_eq!(one.len(), 1);
        assert!(one[0].samples.iter().all(|w| *w == m.mean));

        let paths = saa_samples(&m, 8, 10_000, 99, Exec::default());
        let mean = paths.iter().fold(Vec2::ZERO, |a, p| a + p.samples[5]) / 10_000.0;
        let bound = 3.0 * m.sigma_f / 100.0;
        assert!((mean.x - m.mean.x).abs() < bound, "{mean:?}");
        assert!((mean.y - m.mean.y).abs() < bound, "{mean:?}");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let p = sample_path(&model(1.0, 0.5), 12, 4);
        p.write_csv(&path).unwrap();
        assert_eq!(WindPath::read_csv(&path, 4).unwrap(), p);
    }
}
