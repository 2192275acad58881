//! Random-walk mobility over a rectangular grid of locations.
//!
//! Locations are indexed row-major. From each cell the user stays put with
//! `stay_prob` and otherwise moves to one of its 4-neighbours (no diagonals,
//! no wraparound) chosen uniformly. A cell without neighbours (1x1 grid)
//! always stays.

use rand::Rng;

use super::ScenarioConfig;

/// 4-neighbours of `loc` in a `width` x `height` grid, in ascending index order.
pub fn neighbors(loc: usize, width: usize, height: usize) -> Vec<usize> {
    let (row, col) = (loc / width, loc % width);
    let mut out = Vec::with_capacity(4);
    if row > 0 {
        out.push(loc - width);
    }
    if col > 0 {
        out.push(loc - 1);
    }
    if col + 1 < width {
        out.push(loc + 1);
    }
    if row + 1 < height {
        out.push(loc + width);
    }
    out
}

pub fn sample_next_location<R: Rng + ?Sized>(loc: usize, cfg: &ScenarioConfig, rng: &mut R) -> usize {
    let nbrs = neighbors(loc, cfg.grid_width, cfg.grid_height);
    // One uniform draw per call keeps the stream position independent of the outcome.
    let u: f64 = rng.random();
    if nbrs.is_empty() || u < cfg.stay_prob {
        return loc;
    }
    let scaled = (u - cfg.stay_prob) / (1.0 - cfg.stay_prob);
    let idx = ((scaled * nbrs.len() as f64) as usize).min(nbrs.len() - 1);
    nbrs[idx]
}

/// Dense row-stochastic matrix over grid locations.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    probs: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "transition matrix must be square");
        Self {
            n,
            probs: rows.into_iter().flatten().collect(),
        }
    }

    /// The exact mobility chain described by `cfg`.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let n = cfg.num_locations();
        let mut probs = vec![0.0; n * n];
        for loc in 0..n {
            let nbrs = neighbors(loc, cfg.grid_width, cfg.grid_height);
            if nbrs.is_empty() {
                probs[loc * n + loc] = 1.0;
                continue;
            }
            probs[loc * n + loc] = cfg.stay_prob;
            let share = (1.0 - cfg.stay_prob) / nbrs.len() as f64;
            for nb in nbrs {
                probs[loc * n + nb] += share;
            }
        }
        Self { n, probs }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.probs[from * self.n..(from + 1) * self.n]
    }

    /// Non-zero successors of `from` as `(location, probability)` pairs.
    pub fn successors(&self, from: usize) -> Vec<(usize, f64)> {
        self.row(from)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i, p))
            .collect()
    }

    pub fn is_stochastic(&self, tol: f64) -> bool {
        (0..self.n).all(|r| {
            let row = self.row(r);
            row.iter().all(|&p| p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

/// Mixes every row with the uniform distribution over `{self} ∪ neighbours`:
/// `(1 - eta) * P + eta * U`.
pub fn perturb_transitions(
    matrix: &TransitionMatrix,
    width: usize,
    height: usize,
    eta: f64,
) -> TransitionMatrix {
    assert!((0.0..=1.0).contains(&eta), "eta must lie in [0, 1]");
    assert_eq!(matrix.len(), width * height, "matrix does not match grid");
    let n = matrix.len();
    let mut probs = matrix.probs.clone();
    if eta == 0.0 {
        return TransitionMatrix { n, probs };
    }
    for loc in 0..n {
        let mut support = neighbors(loc, width, height);
        support.push(loc);
        let u = 1.0 / support.len() as f64;
        let row = &mut probs[loc * n..(loc + 1) * n];
        for p in row.iter_mut() {
            *p *= 1.0 - eta;
        }
        for s in support {
            row[s] += eta * u;
        }
    }
    TransitionMatrix { n, probs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn neighbor_counts() {
        assert_eq!(neighbors(0, 4, 4), vec![1, 4]);
        assert_eq!(neighbors(5, 4, 4), vec![1, 4, 6, 9]);
        assert_eq!(neighbors(7, 4, 4), vec![3, 6, 11]);
        assert!(neighbors(0, 1, 1).is_empty());
    }

    #[test]
    fn corner_cell_probabilities() {
        let m = TransitionMatrix::from_config(&grid_cfg());
        assert!((m.prob(0, 0) - 0.6).abs() < 1e-15);
        assert!((m.prob(0, 1) - 0.2).abs() < 1e-15);
        assert!((m.prob(0, 4) - 0.2).abs() < 1e-15);
        assert!(m.is_stochastic(1e-12));
    }

    #[test]
    fn stay_prob_one_never_moves() {
        let cfg = ScenarioConfig {
            stay_prob: 1.0,
            ..grid_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_next_location(5, &cfg, &mut rng), 5);
        }
    }

    #[test]
    fn interior_frequencies_match_chain() {
        let cfg = grid_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 16];
        let n = 1_000_000;
        for _ in 0..n {
            counts[sample_next_location(5, &cfg, &mut rng)] += 1;
        }
        let freq = |i: usize| counts[i] as f64 / n as f64;
        assert!((freq(5) - 0.6).abs() < 0.005);
        for nb in [1, 4, 6, 9] {
            assert!((freq(nb) - 0.1).abs() < 0.005, "neighbor {nb}: {}", freq(nb));
        }
        assert_eq!(counts.iter().sum::<usize>(), n);
    }

    #[test]
    fn chi_square_every_location() {
        // Critical value of chi-square at alpha = 0.001 for df = 1..4.
        let crit = [10.828, 13.816, 16.266, 18.467];
        let cfg = grid_cfg();
        let m = TransitionMatrix::from_config(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        for loc in 0..16 {
            let mut counts = [0usize; 16];
            for _ in 0..n {
                counts[sample_next_location(loc, &cfg, &mut rng)] += 1;
            }
            let succ = m.successors(loc);
            let stat: f64 = succ
                .iter()
                .map(|&(to, p)| {
                    let e = p * n as f64;
                    (counts[to] as f64 - e).powi(2) / e
                })
                .sum();
            assert!(stat < crit[succ.len() - 2], "loc {loc}: chi2 {stat}");
        }
    }

    #[test]
    fn perturbation_endpoints_and_row_sums() {
        let cfg = grid_cfg();
        let m = TransitionMatrix::from_config(&cfg);
        assert_eq!(perturb_transitions(&m, 4, 4, 0.0), m);
        let u = perturb_transitions(&m, 4, 4, 1.0);
        assert!((u.prob(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((u.prob(5, 9) - 0.2).abs() < 1e-15);
        for k in 0..=20 {
            let p = perturb_transitions(&m, 4, 4, k as f64 / 20.0);
            for r in 0..16 {
                assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }
}
