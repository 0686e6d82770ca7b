// SPDX-License-Identifier: MIT OR Apache-2.0

//! Distance between two groups of prompt variants in text-embedding space.

use laekit_core::backbones::TextEncoder;
use laekit_core::losses::cosine;
use laekit_core::prompt::encode_text;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub variants_a: Vec<String>,
    pub variants_b: Vec<String>,
    /// `1 - cos(mean_a, mean_b)` over the group centroids.
    pub centroid_distance: f64,
    /// `pairwise[i][j] = 1 - cos(a_i, b_j)`.
    pub pairwise: Vec<Vec<f64>>,
    pub mean_pairwise: f64,
}

fn centroid(embs: &[Vec<f64>]) -> Vec<f64> {
    let mut c = vec![0.0; embs[0].len()];
    for e in embs {
        for (c, v) in c.iter_mut().zip(e) {
            *c += v;
        }
    }
    c.iter().map(|v| v / embs.len() as f64).collect()
}

/// Probe on precomputed embeddings; `names` label the rows and columns.
pub fn bias_table(a: (&[String], &[Vec<f64>]), b: (&[String], &[Vec<f64>])) -> Result<BiasTable> {
    if a.1.is_empty() || b.1.is_empty() {
        return Err(EvalError::Empty("each prompt group needs at least one variant".into()));
    }
    let pairwise = a.1.iter().map(|x| b.1.iter().map(|y| Ok(1.0 - cosine(x, y)?)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
    let count = (a.1.len() * b.1.len()) as f64;
    Ok(BiasTable {
        variants_a: a.0.to_vec(),
        variants_b: b.0.to_vec(),
        centroid_distance: 1.0 - cosine(&centroid(a.1), &centroid(b.1))?,
        mean_pairwise: pairwise.iter().flatten().sum::<f64>() / count,
        pairwise,
    })
}

pub fn prompt_bias_probe<S: AsRef<str>>(variants_a: &[S], variants_b: &[S], encoder: &dyn TextEncoder) -> Result<BiasTable> {
    let encode = |vs: &[S]| -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let names = vs.iter().map(|s| s.as_ref().to_string()).collect();
        let embs = vs.iter().map(|s| Ok(encode_text(s.as_ref(), encoder)?.values)).collect::<Result<Vec<_>>>()?;
        Ok((names, embs))
    };
    let (na, ea) = encode(variants_a)?;
    let (nb, eb) = encode(variants_b)?;
    bias_table((&na, &ea), (&nb, &eb))
}
