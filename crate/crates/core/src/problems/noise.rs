//! Additive Gaussian observation noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Adds `level · std(u) · N(0, 1)` to every observed field independently;
/// `level = 0.2` is 20 % noise.
pub fn add_noise(data: &Dataset, level: f64, seed: u64) -> Result<Dataset> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::Config(format!("noise level must be non-negative, got {level}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    for v in out.values.iter_mut() {
        let sd = level * std_dev(v);
        if sd > 0.0 {
            let dist = Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))?;
            for x in v.iter_mut() {
                *x += dist.sample(&mut rng);
            }
        }
    }
    out.meta.insert(
        "noise".into(),
        serde_json::json!({ "level": level, "seed": seed, "model": "level * std(field) * N(0,1)" }),
    );
    Ok(out)
}
