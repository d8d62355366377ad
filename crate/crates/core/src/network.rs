//! Structure of a fitted network: or-symmetrization, spectral clustering and
//! influence ranking.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::simulation::{derive_seed, SimRng};

const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;
const KMEANS_MAX_ITERS: usize = 300;

fn check_square(a: ArrayView2<'_, f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return domain(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols()));
    }
    Ok(a.nrows())
}

/// Undirected 0/1 adjacency with an edge wherever either directed weight is
/// strictly positive. The diagonal follows the same rule.
pub fn symmetrize_or(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let m = check_square(a)?;
    Ok(Array2::from_shape_fn((m, m), |(i, j)| {
        if a[(i, j)] > 0.0 || a[(j, i)] > 0.0 {
            1.0
        } else {
            0.0
        }
    }))
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: Array2<f64>,
    pub sweeps: usize,
}

fn off_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is at most
/// `1e-10`. Only the upper triangle is read.
pub fn jacobi_eigen(a: ArrayView2<'_, f64>) -> Result<SymmetricEigen> {
    let n = check_square(a)?;
    if a.iter().any(|v| !v.is_finite()) {
        return domain("non-finite matrix entry");
    }
    let mut s = Array2::from_shape_fn((n, n), |(i, j)| if i <= j { a[(i, j)] } else { a[(j, i)] });
    let mut v = Array2::<f64>::eye(n);
    let mut sweeps = 0;
    while off_norm(&s) > JACOBI_TOL && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = s[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (s[(q, q)] - s[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let skp = s[(k, p)];
                    let skq = s[(k, q)];
                    s[(k, p)] = c * skp - sn * skq;
                    s[(k, q)] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[(p, k)];
                    let sqk = s[(q, k)];
                    s[(p, k)] = c * spk - sn * sqk;
                    s[(q, k)] = sn * spk + c * sqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)]));
    let values = order.iter().map(|&i| s[(i, i)]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[(r, order[c])]);
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// `I - D^{-1/2} A D^{-1/2}`; rows and columns of zero-degree nodes are
/// identity rows.
pub fn normalized_laplacian(adj: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let m = check_square(adj)?;
    let deg: Vec<f64> = adj.rows().into_iter().map(|r| r.sum()).collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    Ok(Array2::from_shape_fn((m, m), |(i, j)| {
        let id = if i == j { 1.0 } else { 0.0 };
        if deg[i] == 0.0 || deg[j] == 0.0 {
            return id;
        }
        id - inv_sqrt[i] * adj[(i, j)] * inv_sqrt[j]
    }))
}

/// Spectral embedding of an undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `M x k`, rows of unit length except isolated nodes, which are zero.
    pub points: Array2<f64>,
    /// Smallest `k` Laplacian eigenvalues.
    pub eigenvalues: Vec<f64>,
    pub isolated: Vec<bool>,
}

/// Rows of the `k` eigenvectors of the normalized Laplacian with smallest
/// eigenvalues, each row scaled to unit length.
pub fn spectral_embed(adj: ArrayView2<'_, f64>, k: usize) -> Result<Embedding> {
    let m = check_square(adj)?;
    if k == 0 || k > m {
        return domain(format!("embedding dimension {k} outside 1..={m}"));
    }
    if adj.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return domain("adjacency must be finite and non-negative");
    }
    let isolated: Vec<bool> = adj.rows().into_iter().map(|r| r.sum() == 0.0).collect();
    let lap = normalized_laplacian(adj)?;
    let eig = jacobi_eigen(lap.view())?;
    let mut points = eig.vectors.slice(ndarray::s![.., 0..k]).to_owned();
    for (i, mut row) in points.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.dot(&row).sqrt();
        if isolated[i] || n == 0.0 {
            row.fill(0.0);
        } else {
            row /= n;
        }
    }
    Ok(Embedding {
        points,
        eigenvalues: eig.values[..k].to_vec(),
        isolated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Numbered in order of first appearance.
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squares.
    pub cost: f64,
    pub iterations: usize,
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: ndarray::ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.axis_iter(Axis(0)).enumerate() {
        let d = sq_dist(p, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(points: ArrayView2<'_, f64>, k: usize, rng: &mut SimRng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            while d2[pick] == 0.0 {
                // rounding pushed the draw past the last positive weight
                pick -= 1;
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    Array2::from_shape_fn((k, points.ncols()), |(c, j)| points[(chosen[c], j)])
}

fn lloyd(points: ArrayView2<'_, f64>, k: usize, seed: u64) -> KMeans {
    let n = points.nrows();
    let mut rng = SimRng::new(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut cost = f64::INFINITY;
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITERS {
        iterations += 1;
        let mut changed = false;
        let mut new_cost = 0.0;
        for i in 0..n {
            let (c, d) = nearest(points.row(i), &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            new_cost += d;
        }
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums.row_mut(labels[i]).scaled_add(1.0, &points.row(i));
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            // an emptied cluster keeps its centroid
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            }
        }
        let updated: f64 = (0..n).map(|i| sq_dist(points.row(i), centroids.row(labels[i]))).sum();
        assert!(
            new_cost <= cost * (1.0 + 1e-12) + 1e-12 && updated <= new_cost * (1.0 + 1e-12) + 1e-12,
            "k-means cost increased"
        );
        cost = updated;
        if !changed {
            break;
        }
    }
    KMeans {
        labels,
        centroids,
        cost,
        iterations,
    }
}

fn relabel(fit: &mut KMeans) {
    let k = fit.centroids.nrows();
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for l in &fit.labels {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
    }
    for l in map.iter_mut().filter(|l| **l == usize::MAX) {
        *l = next;
        next += 1;
    }
    let mut centroids = fit.centroids.clone();
    for (old, &new) in map.iter().enumerate() {
        centroids.row_mut(new).assign(&fit.centroids.row(old));
    }
    fit.centroids = centroids;
    fit.labels.iter_mut().for_each(|l| *l = map[*l]);
}

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` runs. Restart
/// `r` uses `derive_seed(seed, r)`; ties in cost go to the earliest restart.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, seed: u64, restarts: usize) -> Result<KMeans> {
    let n = points.nrows();
    if k == 0 || k > n {
        return domain(format!("cluster count {k} outside 1..={n}"));
    }
    if restarts == 0 {
        return domain("need at least one restart");
    }
    if points.iter().any(|v| !v.is_finite()) {
        return domain("non-finite point coordinate");
    }
    let runs: Vec<KMeans> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(points, k, derive_seed(seed, r as u64)))
        .collect();
    let mut best = runs
        .into_iter()
        .reduce(|a, b| if b.cost < a.cost { b } else { a })
        .expect("at least one restart");
    relabel(&mut best);
    Ok(best)
}

/// Spectral clustering of an adjacency matrix into `k` groups. Isolated nodes
/// are left out of k-means and then joined to the nearest centroid.
pub fn spectral_clustering(adj: ArrayView2<'_, f64>, k: usize, seed: u64, restarts: usize) -> Result<Vec<usize>> {
    let emb = spectral_embed(adj, k)?;
    let connected: Vec<usize> = (0..emb.isolated.len()).filter(|&i| !emb.isolated[i]).collect();
    if connected.len() < k {
        return domain(format!("{} connected nodes cannot form {k} clusters", connected.len()));
    }
    let sub = emb.points.select(Axis(0), &connected);
    let fit = kmeans(sub.view(), k, seed, restarts)?;
    let mut labels = vec![0; emb.isolated.len()];
    for (pos, &i) in connected.iter().enumerate() {
        labels[i] = fit.labels[pos];
    }
    for i in (0..labels.len()).filter(|&i| emb.isolated[i]) {
        labels[i] = nearest(emb.points.row(i), &fit.centroids).0;
    }
    Ok(labels)
}

/// Nodes ordered by descending row sum (outgoing influence), ties by index.
pub fn influence_ranking(a: ArrayView2<'_, f64>) -> Result<Vec<(usize, f64)>> {
    check_square(a)?;
    let sums: Array1<f64> = a.sum_axis(Axis(1));
    let mut ranked: Vec<(usize, f64)> = sums.into_iter().enumerate().collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1));
    Ok(ranked)
}
