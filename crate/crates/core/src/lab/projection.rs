use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::instance::Instance;
use crate::metric::{Embedding, EmbeddingMeta};

/// `rows x d` matrix of independent standard normals scaled by `d^{-1/2}`,
/// filled row-major from a ChaCha8 stream seeded with `seed`.
pub fn gaussian_matrix(rows: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    (0..rows)
        .map(|_| {
            (0..d)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Images `x ↦ x·M` for a `(k+1) x d` matrix `M`.
pub fn project_with_matrix(inst: &Instance, matrix: &[Vec<f64>], method: &str) -> Result<Embedding> {
    let dim = inst.params.dim();
    if matrix.len() != dim {
        return Err(LabError::LengthMismatch {
            left: matrix.len(),
            right: dim,
        });
    }
    let d = matrix.first().map(|r| r.len()).unwrap_or(0);
    if d == 0 || matrix.iter().any(|r| r.len() != d) {
        return Err(LabError::InvalidParams("projection matrix must be rectangular with d >= 1".into()));
    }
    let images = inst
        .points
        .iter()
        .map(|pt| {
            let mut out = vec![0.0; d];
            for (x, row) in pt.coords.iter().zip(matrix) {
                if *x != 0.0 {
                    for (o, m) in out.iter_mut().zip(row) {
                        *o += x * m;
                    }
                }
            }
            out
        })
        .collect();
    Embedding::new(
        d,
        inst.params.p,
        EmbeddingMeta {
            method: method.to_string(),
            seed: None,
            config_hash: None,
        },
        images,
    )
}

/// Johnson–Lindenstrauss style baseline: multiply source coordinates by a
/// scaled Gaussian matrix. Deterministic in `seed`.
pub fn gaussian_projection(inst: &Instance, d: usize, seed: u64) -> Result<Embedding> {
    if d == 0 {
        return Err(LabError::InvalidParams("d must be >= 1".into()));
    }
    let m = gaussian_matrix(inst.params.dim(), d, seed);
    let mut emb = project_with_matrix(inst, &m, "gaussian")?;
    emb.meta.seed = Some(seed);
    Ok(emb)
}
