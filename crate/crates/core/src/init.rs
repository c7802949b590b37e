//! Balanced small initialization: per-neuron signs and unit directions plus a
//! shared log-scale, so that a_j(0) = alpha * s_j and w_j(0) = alpha * u_j with
//! alpha as small as e^-500.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::norm;

/// A balanced initialization draw. The scale alpha is stored as its natural
/// log so it never has to be representable as a float itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitDraw {
    pub m: usize,
    pub d: usize,
    /// ln(alpha); e.g. -500 for the smallest scale used in practice.
    pub alpha_log: f64,
    /// Output-weight signs, each +1.0 or -1.0.
    pub signs: Vec<f64>,
    /// Unit directions u_j, one per neuron.
    pub directions: Vec<Vec<f64>>,
}

impl InitDraw {
    /// Assemble a draw from explicit parts, normalizing the directions.
    /// Used by tests and by forced-mask constructions.
    pub fn from_parts(alpha_log: f64, signs: Vec<f64>, directions: Vec<Vec<f64>>) -> Self {
        assert_eq!(signs.len(), directions.len());
        assert!(signs.iter().all(|s| *s == 1.0 || *s == -1.0));
        let d = directions.first().map_or(0, Vec::len);
        let directions = directions
            .into_iter()
            .map(|mut u| {
                assert_eq!(u.len(), d);
                let nrm = norm(&u);
                assert!(nrm > 0.0, "zero direction");
                u.iter_mut().for_each(|x| *x /= nrm);
                u
            })
            .collect::<Vec<_>>();
        Self {
            m: signs.len(),
            d,
            alpha_log,
            signs,
            directions,
        }
    }
}

/// Draw m neurons: signs uniform on {+1, -1}, directions uniform on the unit
/// sphere (normalized Gaussians). Deterministic given the seed; the per-neuron
/// draw order is sign first, then the d direction coordinates.
pub fn sample_init(m: usize, d: usize, alpha_log: f64, seed: u64) -> InitDraw {
    assert!(m >= 1 && d >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_init_with(m, d, alpha_log, &mut rng)
}

/// Same as [`sample_init`] but drawing from a caller-supplied stream, so
/// Monte-Carlo trials can use independent counter-based streams.
pub fn sample_init_with(m: usize, d: usize, alpha_log: f64, rng: &mut impl Rng) -> InitDraw {
    let mut signs = Vec::with_capacity(m);
    let mut directions = Vec::with_capacity(m);
    for _ in 0..m {
        signs.push(if rng.gen::<bool>() { 1.0 } else { -1.0 });
        let mut u: Vec<f64>;
        loop {
            u = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let nrm = norm(&u);
            if nrm > 0.0 {
                u.iter_mut().for_each(|x| *x /= nrm);
                break;
            }
        }
        directions.push(u);
    }
    InitDraw {
        m,
        d,
        alpha_log,
        signs,
        directions,
    }
}
