//! Fixed maps from raw observations into the space kNN runs in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{DacError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    Identity,
    /// `x ↦ G x` with `G` of shape `out_dim × in_dim`, entries standard
    /// normal divided by `√out_dim`.
    RandomProjection { seed: u64, in_dim: usize, out_dim: usize, matrix: Vec<f64> },
    /// Per-coordinate `(x - mean) / scale`.
    Standardize { mean: Vec<f64>, scale: Vec<f64> },
}

impl Representation {
    pub fn random_projection(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(DacError::Config("projection dimensions must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (out_dim as f64).sqrt();
        let matrix = (0..in_dim * out_dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            })
            .collect();
        Ok(Representation::RandomProjection { seed, in_dim, out_dim, matrix })
    }

    /// Standardizer fitted on the source states of `ds`. Constant coordinates
    /// keep scale 1.
    pub fn standardize(ds: &Dataset) -> Self {
        let d = ds.state_dim();
        let n = ds.len() as f64;
        let mut mean = vec![0.0; d];
        for i in 0..ds.len() {
            for (m, &x) in mean.iter_mut().zip(ds.state(i)) {
                *m += x as f64 / n;
            }
        }
        let mut var = vec![0.0; d];
        for i in 0..ds.len() {
            for ((v, m), &x) in var.iter_mut().zip(&mean).zip(ds.state(i)) {
                *v += (x as f64 - m).powi(2) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Representation::Standardize { mean, scale }
    }

    pub fn output_dim(&self, in_dim: usize) -> usize {
        match self {
            Representation::Identity => in_dim,
            Representation::RandomProjection { out_dim, .. } => *out_dim,
            Representation::Standardize { mean, .. } => mean.len(),
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        let expected = match self {
            Representation::Identity => return Ok(()),
            Representation::RandomProjection { in_dim, .. } => *in_dim,
            Representation::Standardize { mean, .. } => mean.len(),
        };
        if got != expected {
            return Err(DacError::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    /// Full-precision embedding.
    pub fn embed_f64(&self, obs: &[f32]) -> Result<Vec<f64>> {
        self.check_dim(obs.len())?;
        Ok(match self {
            Representation::Identity => obs.iter().map(|&x| x as f64).collect(),
            Representation::RandomProjection { in_dim, matrix, .. } => matrix
                .chunks(*in_dim)
                .map(|row| row.iter().zip(obs).map(|(g, &x)| g * x as f64).sum())
                .collect(),
            Representation::Standardize { mean, scale } => {
                obs.iter().zip(mean).zip(scale).map(|((&x, m), s)| (x as f64 - m) / s).collect()
            }
        })
    }

    /// Embedding rounded to the dataset's `f32` storage.
    pub fn embed(&self, obs: &[f32]) -> Result<Vec<f32>> {
        if let Representation::Identity = self {
            return Ok(obs.to_vec());
        }
        Ok(self.embed_f64(obs)?.into_iter().map(|x| x as f32).collect())
    }

    /// Embed every state and next state of `ds`.
    pub fn embed_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        self.check_dim(ds.state_dim())?;
        ds.map_states(self.output_dim(ds.state_dim()), |s| self.embed(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identity_passes_through() {
        assert_eq!(Representation::Identity.embed(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn projection_is_seeded_and_linear() {
        let a = Representation::random_projection(4, 6, 3).unwrap();
        assert_eq!(a, Representation::random_projection(4, 6, 3).unwrap());
        assert_ne!(a, Representation::random_projection(4, 6, 4).unwrap());
        // dyadic inputs keep x + y exact in f32
        let x = [0.5f32, -1.25, 2.0, 0.75];
        let y = [1.5f32, 0.25, -3.0, 0.125];
        let xy: Vec<f32> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let ex = a.embed_f64(&x).unwrap();
        let ey = a.embed_f64(&y).unwrap();
        for ((s, p), q) in a.embed_f64(&xy).unwrap().iter().zip(&ex).zip(&ey) {
            assert!((s - p - q).abs() < 1e-9);
        }
        assert!(a.embed(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn projection_roughly_preserves_distances() {
        let d = 16;
        let r = Representation::random_projection(d, 64, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f32>> = (0..100).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let emb: Vec<Vec<f64>> = pts.iter().map(|p| r.embed_f64(p).unwrap()).collect();
        let mut ratios = Vec::new();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let orig: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>().sqrt();
                let proj: f64 = emb[i].iter().zip(&emb[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                ratios.push(proj / orig);
            }
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 1.0).abs() < 0.1, "mean ratio {mean}");
        let within = ratios.iter().filter(|r| (**r - 1.0).abs() < 0.35).count() as f64 / ratios.len() as f64;
        assert!(within > 0.95, "{within}");
    }

    #[test]
    fn standardize_centres_the_data() {
        let ds = Dataset::from_tuples(
            (0..10)
                .map(|i| crate::dataset::ExperienceTuple {
                    state: vec![i as f32, 5.0],
                    action: 0,
                    reward: 0.0,
                    next_state: vec![i as f32, 5.0],
                    terminal: false,
                })
                .collect(),
            1,
        )
        .unwrap();
        let r = Representation::standardize(&ds);
        let e = r.embed_dataset(&ds).unwrap();
        let m: f64 = (0..10).map(|i| e.state(i)[0] as f64).sum::<f64>() / 10.0;
        assert!(m.abs() < 1e-6);
        assert_eq!(e.state(3)[1], 0.0);
        assert_eq!(r.embed_dataset(&ds).unwrap(), e);
    }
}
