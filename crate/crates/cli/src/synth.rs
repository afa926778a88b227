//! Seeded synthetic feature sets with well-separated identities.
//!
//! Generator: ChaCha8 (`rand_chacha` 0.9, `seed_from_u64`). Uniforms take the
//! top 53 bits of `next_u64` mapped onto `(0, 1]`; normals use the cosine
//! branch of Box-Muller, two uniforms per draw. Identities are generated in
//! order known, known-unknown, unknown-unknown; for each, the class mean is a
//! normalized standard-normal vector, then every image is
//! `normalize(mean + sigma * z)`.

use openset_core::{Dataset, FeatureVector, LabeledFeature};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dimension: usize,
    pub known: usize,
    pub known_unknown: usize,
    pub unknown_unknown: usize,
    pub images_per_known: u32,
    pub images_per_known_unknown: u32,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dimension: 64,
            known: 50,
            known_unknown: 50,
            unknown_unknown: 100,
            images_per_known: 6,
            images_per_known_unknown: 2,
            sigma: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Core(openset_core::Error::invalid(m.to_string())));
        if self.dimension == 0 {
            return bad("synthetic dimension must be >= 1");
        }
        if self.known == 0 {
            return bad("synthetic data needs at least one known identity");
        }
        if self.images_per_known < 4 {
            return bad("known identities need at least 4 images");
        }
        if !(2..=3).contains(&self.images_per_known_unknown) {
            return bad("known-unknown identities have 2 or 3 images");
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        Ok(())
    }

    pub fn record_count(&self) -> usize {
        self.known * self.images_per_known as usize
            + self.known_unknown * self.images_per_known_unknown as usize
            + self.unknown_unknown
    }
}

struct Normal(ChaCha8Rng);

impl Normal {
    fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn sample(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn vector(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.sample()).collect()
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.check()?;
    let mut rng = Normal(ChaCha8Rng::seed_from_u64(spec.seed));
    let groups = [
        ("K", spec.known, spec.images_per_known),
        ("KU", spec.known_unknown, spec.images_per_known_unknown),
        ("UU", spec.unknown_unknown, 1),
    ];
    let mut records = Vec::with_capacity(spec.record_count());
    for (prefix, count, images) in groups {
        for i in 0..count {
            let identity = format!("{prefix}{i:04}");
            let mean = normalized(rng.vector(spec.dimension));
            for image in 1..=images {
                let noisy = mean.iter().map(|m| m + spec.sigma * rng.sample()).collect();
                records.push(LabeledFeature::new(
                    identity.clone(),
                    image,
                    FeatureVector::new(normalized(noisy)),
                ));
            }
        }
    }
    Ok(Dataset::new(records)?)
}
