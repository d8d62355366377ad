//! Synthetic data from the monotone single-index autoregressive model with a
//! known network.
//!
//! Randomness comes from [`SimRng`]: xoshiro256++ seeded through SplitMix64
//! (`seed_from_u64`), uniforms from the top 53 bits of each output, and
//! standard normals by the cosine branch of Box-Muller (two uniforms per draw).
//! Replicate seeds are derived with [`derive_seed`].

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math::linalg::{dot, norm2};
use crate::model::{validate_series, MonotoneStepFunction, TimeSeriesMatrix};

/// Seedable generator used by every stochastic routine in the crate.
#[derive(Debug, Clone)]
pub struct SimRng(Xoshiro256PlusPlus);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Seed for sub-stream `index` of `master`: the master generator advanced by
/// `index` jumps (2^128 steps each), then one output.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut g = Xoshiro256PlusPlus::seed_from_u64(master);
    for _ in 0..index {
        g.jump();
    }
    g.next_u64()
}

/// `exp(j x) / (exp(j x) + 1)`, evaluated as `1 / (1 + exp(-j x))`.
pub fn scaled_logistic(j: u32, x: f64) -> f64 {
    1.0 / (1.0 + (-(j as f64) * x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LinkFamily {
    /// Node `j` uses the scaled logistic with index `indices[j]`.
    ScaledLogistic(Vec<u32>),
    Custom(Vec<MonotoneStepFunction>),
}

impl LinkFamily {
    fn len(&self) -> usize {
        match self {
            LinkFamily::ScaledLogistic(v) => v.len(),
            LinkFamily::Custom(v) => v.len(),
        }
    }

    pub fn eval(&self, node: usize, x: f64) -> f64 {
        match self {
            LinkFamily::ScaledLogistic(idx) => scaled_logistic(idx[node], x),
            LinkFamily::Custom(f) => f[node].eval(x),
        }
    }

    /// Indices `first, first + 1, ...` for `m` nodes.
    pub fn consecutive(m: usize, first: u32) -> Self {
        LinkFamily::ScaledLogistic((0..m as u32).map(|j| first + j).collect())
    }

    /// Indices cycling through `1..=9`: node `j` (1-based) gets `(j mod 9) + 1`.
    pub fn cyclic_nine(m: usize) -> Self {
        LinkFamily::ScaledLogistic((1..=m as u32).map(|j| j % 9 + 1).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    Gaussian {
        sigma: f64,
    },
    /// Uniform on `[-half_width, half_width]`.
    Uniform {
        half_width: f64,
    },
}

impl Noise {
    fn check(&self) -> Result<()> {
        let v = match self {
            Noise::Gaussian { sigma } => *sigma,
            Noise::Uniform { half_width } => *half_width,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return domain(format!("noise scale must be finite and non-negative, got {v}"));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut SimRng) -> f64 {
        match *self {
            Noise::Gaussian { sigma } => sigma * rng.normal(),
            Noise::Uniform { half_width } => half_width * (2.0 * rng.uniform() - 1.0),
        }
    }
}

/// Known network, links and noise law behind a simulated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    /// Column `j` is the unit, `s_star[j]`-sparse direction of node `j`.
    pub a_star: Array2<f64>,
    pub links: LinkFamily,
    pub noise: Noise,
    pub s_star: Vec<usize>,
}

impl GroundTruth {
    pub fn nodes(&self) -> usize {
        self.a_star.ncols()
    }

    pub fn direction(&self, j: usize) -> Vec<f64> {
        self.a_star.column(j).to_vec()
    }

    /// Noiseless conditional mean of every node given `x_t`.
    pub fn conditional_mean(&self, x_t: &[f64]) -> Vec<f64> {
        (0..self.nodes())
            .map(|j| {
                let col = self.a_star.column(j);
                let u = col.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| col.to_vec());
                self.links.eval(j, dot(x_t, &u))
            })
            .collect()
    }
}

/// Random sparse unit-column network: each column draws its support
/// uniformly without replacement and standard-normal weights, then is
/// normalized.
pub fn gen_ground_truth(m: usize, s_star: usize, links: LinkFamily, noise: Noise, seed: u64) -> Result<GroundTruth> {
    if m == 0 || s_star == 0 || s_star > m {
        return domain(format!("true sparsity {s_star} outside 1..={m}"));
    }
    if links.len() != m {
        return domain(format!("{} links for {m} nodes", links.len()));
    }
    noise.check()?;
    let mut rng = SimRng::new(seed);
    let mut a_star = Array2::zeros((m, m));
    for j in 0..m {
        let mut support = rand::seq::index::sample(&mut rng, m, s_star).into_vec();
        support.sort_unstable();
        let mut col = vec![0.0; m];
        for &i in &support {
            col[i] = rng.normal();
        }
        let n = norm2(&col);
        if n == 0.0 {
            return Err(Error::DegenerateDirection);
        }
        for i in 0..m {
            a_star[(i, j)] = col[i] / n;
        }
    }
    Ok(GroundTruth {
        a_star,
        links,
        noise,
        s_star: vec![s_star; m],
    })
}

/// Runs the recursion `X_{t+1,j} = f_j(<X_t, u_j>) + Z_{t+1,j}` from
/// `X_0 ~ N(0, I)`. Returns the `(T+1) x M` series and the `T x M` noise
/// actually added (row `t` is the noise in `X_{t+1}`).
pub fn simulate_series(truth: &GroundTruth, transitions: usize, seed: u64) -> Result<(TimeSeriesMatrix, Array2<f64>)> {
    if transitions < 2 {
        return Err(Error::Size(format!("need T >= 2, got {transitions}")));
    }
    let m = truth.nodes();
    let directions: Vec<Vec<f64>> = (0..m).map(|j| truth.direction(j)).collect();
    let mut rng = SimRng::new(seed);
    let mut data = Array2::zeros((transitions + 1, m));
    let mut noise = Array2::zeros((transitions, m));
    for i in 0..m {
        data[(0, i)] = rng.normal();
    }
    let mut prev = data.row(0).to_vec();
    for t in 0..transitions {
        let mut next = vec![0.0; m];
        for j in 0..m {
            let z = truth.noise.draw(&mut rng);
            next[j] = truth.links.eval(j, dot(&prev, &directions[j])) + z;
            noise[(t, j)] = z;
        }
        for j in 0..m {
            data[(t + 1, j)] = next[j];
        }
        prev = next;
    }
    Ok((validate_series(data)?, noise))
}

/// Named simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaperDesign {
    /// 9 nodes, 3 nonzeros per column, links with indices 1..=9.
    Sim9,
    /// 9 nodes, 3 nonzeros per column, links with indices 2..=10.
    Predict9,
    /// 36 nodes, 6 nonzeros per column, link indices cycling through 1..=9.
    Sim36,
}

impl PaperDesign {
    pub fn nodes(self) -> usize {
        match self {
            PaperDesign::Sim9 | PaperDesign::Predict9 => 9,
            PaperDesign::Sim36 => 36,
        }
    }

    pub fn s_star(self) -> usize {
        match self {
            PaperDesign::Sim9 | PaperDesign::Predict9 => 3,
            PaperDesign::Sim36 => 6,
        }
    }

    /// Sparsity level handed to the estimator.
    pub fn fit_sparsity(self) -> usize {
        match self {
            PaperDesign::Sim9 | PaperDesign::Predict9 => 4,
            PaperDesign::Sim36 => 8,
        }
    }

    pub fn links(self) -> LinkFamily {
        match self {
            PaperDesign::Sim9 => LinkFamily::consecutive(9, 1),
            PaperDesign::Predict9 => LinkFamily::consecutive(9, 2),
            PaperDesign::Sim36 => LinkFamily::cyclic_nine(36),
        }
    }

    pub fn ground_truth(self, noise: Noise, seed: u64) -> Result<GroundTruth> {
        gen_ground_truth(self.nodes(), self.s_star(), self.links(), noise, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::iso_wrt;

    fn gauss(sigma: f64) -> Noise {
        Noise::Gaussian { sigma }
    }

    #[test]
    fn logistic_values() {
        assert_eq!(scaled_logistic(1, 0.0), 0.5);
        assert!((scaled_logistic(2, 0.5) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-16);
        assert!((scaled_logistic(2, 0.5) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert_eq!(scaled_logistic(3, 1e6), 1.0);
        assert_eq!(scaled_logistic(3, -1e6), 0.0);
    }

    #[test]
    fn truth_shape() {
        let g = gen_ground_truth(9, 3, LinkFamily::consecutive(9, 1), gauss(0.05), 11).unwrap();
        for j in 0..9 {
            let col = g.direction(j);
            assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 3);
            assert!((norm2(&col) - 1.0).abs() < 1e-12);
        }
        let again = gen_ground_truth(9, 3, LinkFamily::consecutive(9, 1), gauss(0.05), 11).unwrap();
        assert_eq!(g, again);
        let dense = gen_ground_truth(4, 4, LinkFamily::consecutive(4, 1), gauss(0.05), 1).unwrap();
        assert!(dense.a_star.iter().all(|v| *v != 0.0));
        assert!(gen_ground_truth(9, 10, LinkFamily::consecutive(9, 1), gauss(0.05), 1).is_err());
    }

    #[test]
    fn noiseless_recursion_is_exact() {
        let g = PaperDesign::Sim9.ground_truth(gauss(0.0), 5).unwrap();
        let (x, z) = simulate_series(&g, 200, 6).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        for t in 0..200 {
            let mean = g.conditional_mean(x.row(t));
            for j in 0..9 {
                assert_eq!(x.row(t + 1)[j] - mean[j], 0.0);
                assert!(mean[j] > 0.0 && mean[j] < 1.0);
            }
        }
    }

    #[test]
    fn noiseless_target_is_isotonic_in_true_index() {
        let g = PaperDesign::Sim9.ground_truth(gauss(0.0), 8).unwrap();
        let (x, _) = simulate_series(&g, 300, 9).unwrap();
        for j in 0..9 {
            let u = g.direction(j);
            let z: Vec<f64> = x.lagged_rows().map(|r| dot(r, &u)).collect();
            let y = x.target(j);
            assert_eq!(iso_wrt(&z, &y).unwrap(), y);
        }
    }

    #[test]
    fn gaussian_noise_scale() {
        let g = PaperDesign::Sim9.ground_truth(gauss(0.05), 1).unwrap();
        let (_, z) = simulate_series(&g, 5000, 2).unwrap();
        let n = z.len() as f64;
        let mean = z.sum() / n;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.045..=0.055).contains(&sd), "sd {sd}");
    }

    #[test]
    fn uniform_noise_bounded() {
        let g = PaperDesign::Sim9
            .ground_truth(Noise::Uniform { half_width: 0.1 }, 1)
            .unwrap();
        let (_, z) = simulate_series(&g, 2000, 2).unwrap();
        assert!(z.iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn reproducible_given_seed() {
        let g = PaperDesign::Sim36.ground_truth(gauss(0.05), 3).unwrap();
        let a = simulate_series(&g, 50, 4).unwrap();
        let b = simulate_series(&g, 50, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(g.s_star, vec![6; 36]);
    }

    #[test]
    fn link_indices() {
        assert_eq!(
            LinkFamily::cyclic_nine(10),
            LinkFamily::ScaledLogistic(vec![2, 3, 4, 5, 6, 7, 8, 9, 1, 2])
        );
        assert_eq!(PaperDesign::Predict9.links(), LinkFamily::consecutive(9, 2));
    }

    #[test]
    fn seeds_differ_across_indices() {
        let s: Vec<u64> = (0..5).map(|i| derive_seed(42, i)).collect();
        for i in 0..5 {
            for k in i + 1..5 {
                assert_ne!(s[i], s[k]);
            }
        }
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }
}
