//! Seeded synthetic re-identification datasets.
//!
//! The random stream is part of the output contract so that golden values are
//! reproducible across implementations:
//!
//! * generator: ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`);
//! * uniforms: `(next_u64() >> 11) · 2⁻⁵³`;
//! * normals: Box–Muller on `(1 − u₁, u₂)`, using both the cosine and the
//!   sine output in that order;
//! * integers below `n`: `next_u64() % n`.
//!
//! Draw order: identity centers, then per-image embeddings (identity-major),
//! then metadata families in name order, then cameras.
//!
//! Noise "scale" is the RMS norm of the noise vector, so each coordinate has
//! standard deviation `scale / √dim`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ItemManifest, ItemRecord, MetadataFeatureSet, Split};
use crate::error::{ReidError, Result};
use crate::matrix::Matrix;

/// Portable standard-normal stream (ChaCha8 + Box–Muller).
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.next_u64() % n
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        self.spare = Some(r * (TAU * u2).sin());
        r * (TAU * u2).cos()
    }

    /// `dim` independent normals with standard deviation `std`.
    pub fn vector(&mut self, dim: usize, std: f64) -> Vec<f64> {
        (0..dim).map(|_| std * self.normal()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_identities: usize,
    pub images_per_identity: usize,
    pub dim: usize,
    pub intra_sigma: f64,
    pub inter_sep: f64,
    pub num_cameras: usize,
    pub track_len: usize,
    pub meta_dims: BTreeMap<String, usize>,
    pub meta_fidelity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_identities: 50,
            images_per_identity: 8,
            dim: 32,
            intra_sigma: 1.0,
            inter_sep: 2.5,
            num_cameras: 4,
            track_len: 4,
            meta_dims: BTreeMap::from([("color".to_string(), 8), ("type".to_string(), 6)]),
            meta_fidelity: 0.5,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ReidError::ConfigInvalid(m));
        if self.num_identities == 0 {
            return bad("num_identities must be positive".into());
        }
        if self.images_per_identity < 2 {
            return bad("images_per_identity must be >= 2".into());
        }
        if self.dim == 0 || self.num_cameras == 0 || self.track_len == 0 {
            return bad("dim, num_cameras and track_len must be positive".into());
        }
        if !(self.intra_sigma > 0.0 && self.intra_sigma.is_finite()) {
            return bad(format!("intra_sigma {} must be > 0", self.intra_sigma));
        }
        if !(self.inter_sep > 0.0 && self.inter_sep.is_finite()) {
            return bad(format!("inter_sep {} must be > 0", self.inter_sep));
        }
        if !(0.0..=1.0).contains(&self.meta_fidelity) {
            return bad(format!(
                "meta_fidelity {} outside [0, 1]",
                self.meta_fidelity
            ));
        }
        if let Some((name, _)) = self.meta_dims.iter().find(|(_, &d)| d == 0) {
            return bad(format!("metadata family {name:?} has zero dimension"));
        }
        Ok(())
    }
}

/// Centers with pairwise separation ≥ `inter_sep`; the spread widens by 5%
/// after every 64 consecutive rejections.
fn place_centers(rng: &mut GaussianStream, cfg: &SynthConfig) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_identities);
    let mut spread = 1.0;
    let mut rejections = 0;
    // per-coordinate std giving typical pairwise distance ≈ spread · inter_sep
    let base_std = cfg.inter_sep / (2.0 * cfg.dim as f64).sqrt();
    while centers.len() < cfg.num_identities {
        let c = rng.vector(cfg.dim, base_std * spread);
        let far = centers.iter().all(|o| {
            let d2: f64 = o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= cfg.inter_sep
        });
        if far {
            centers.push(c);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections == 64 {
                spread *= 1.05;
                rejections = 0;
            }
        }
    }
    centers
}

/// Builds the manifest, embeddings and metadata families for `cfg`.
///
/// Per identity, image 0 is the query and the rest go to the gallery in
/// tracks of `track_len` consecutive images, one camera per track.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = GaussianStream::new(cfg.seed);
    let centers = place_centers(&mut rng, cfg);
    let n_img = cfg.images_per_identity;
    let total = cfg.num_identities * n_img;

    let noise_std = cfg.intra_sigma / (cfg.dim as f64).sqrt();
    let mut emb = Vec::with_capacity(total * cfg.dim);
    for center in &centers {
        for _ in 0..n_img {
            let noise = rng.vector(cfg.dim, noise_std);
            emb.extend(center.iter().zip(noise).map(|(c, e)| c + e));
        }
    }
    let embeddings = Matrix::new(total, cfg.dim, emb)?;

    let mut meta = MetadataFeatureSet::new();
    let f = cfg.meta_fidelity;
    for (family, &md) in &cfg.meta_dims {
        let std = 1.0 / (md as f64).sqrt();
        let signals: Vec<Vec<f64>> = (0..cfg.num_identities)
            .map(|_| rng.vector(md, std))
            .collect();
        let mut values = Vec::with_capacity(total * md);
        for signal in &signals {
            for _ in 0..n_img {
                let noise = rng.vector(md, std);
                values.extend(signal.iter().zip(noise).map(|(s, e)| f * s + (1.0 - f) * e));
            }
        }
        meta.insert(family.clone(), Matrix::new(total, md, values)?);
    }

    let mut items = Vec::with_capacity(total);
    let mut next_track = 0u64;
    let cams = cfg.num_cameras as u64;
    for id in 0..cfg.num_identities {
        let name = |j: usize| format!("id{id:04}_{j:03}");
        items.push(
            ItemRecord::new(name(0), Split::Query)
                .identity(id as u64)
                .camera(rng.below(cams)),
        );
        for chunk in (1..n_img).collect::<Vec<_>>().chunks(cfg.track_len) {
            let camera = rng.below(cams);
            for &j in chunk {
                items.push(
                    ItemRecord::new(name(j), Split::Gallery)
                        .identity(id as u64)
                        .camera(camera)
                        .track(next_track),
                );
            }
            next_track += 1;
        }
    }
    let manifest = ItemManifest::new(items)?;
    Ok(Dataset {
        manifest,
        embeddings,
        meta,
    })
}
