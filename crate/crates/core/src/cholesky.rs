//! Envelope (skyline) Cholesky factorization under reverse Cuthill-McKee
//! ordering. Used as an opt-in direct backend for the potential solve, whose
//! matrix never changes during a run.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Reverse Cuthill-McKee ordering; `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(c, _)| c != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut neighbours = Vec::new();
    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]).unwrap_or(0);
        let start = peripheral(a, seed, &degree);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            neighbours.clear();
            neighbours.extend(a.row(v).map(|(c, _)| c).filter(|&c| !visited[c]));
            neighbours.sort_by_key(|&c| degree[c]);
            for &c in &neighbours {
                visited[c] = true;
                queue.push_back(c);
            }
        }
    }
    order.reverse();
    order
}

/// Pseudo-peripheral node reached by repeated BFS from `seed` within its component.
fn peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut start = seed;
    let mut depth = 0;
    for _ in 0..4 {
        let (levels, last) = bfs_levels(a, start);
        let far = last.into_iter().min_by_key(|&v| degree[v]).unwrap_or(start);
        if levels <= depth {
            break;
        }
        depth = levels;
        start = far;
    }
    start
}

fn bfs_levels(a: &CsrMatrix, start: usize) -> (usize, Vec<usize>) {
    let n = a.nrows();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut frontier = vec![start];
    let mut depth = 0;
    loop {
        let mut next = Vec::new();
        for &v in &frontier {
            for (c, _) in a.row(v) {
                if level[c] == usize::MAX {
                    level[c] = depth + 1;
                    next.push(c);
                }
            }
        }
        if next.is_empty() {
            return (depth, frontier);
        }
        depth += 1;
        frontier = next;
    }
}

/// L Lᵀ = P A Pᵀ with L stored row-wise over each row's envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
    work: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factor a symmetric positive definite matrix. Fails with `Breakdown`
    /// when a non-positive pivot appears.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidArgument("Cholesky needs a square matrix".into()));
        }
        let perm = rcm_ordering(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let first: Vec<usize> =
            (0..n).map(|i| a.row(perm[i]).map(|(c, _)| inv[c]).filter(|&c| c <= i).min().unwrap_or(i)).collect();
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for i in 0..n {
            for (c, v) in a.row(perm[i]) {
                let j = inv[c];
                if j <= i {
                    values[offset[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = values.split_at_mut(offset[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &done[offset[j]..offset[j + 1]];
                let s: f64 = row_i[k0 - fi..j - fi].iter().zip(&row_j[k0 - fj..j - fj]).map(|(a, b)| a * b).sum();
                row_i[j - fi] = (row_i[j - fi] - s) / row_j[j - fj];
            }
            let d = row_i[i - fi] - row_i[..i - fi].iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) {
                return Err(Error::Breakdown { iteration: i, curvature: d });
            }
            row_i[i - fi] = libm::sqrt(d);
        }
        Ok(Self { perm, first, offset, values, work: vec![0.0; n] })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of L.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    /// Solve `A x = b`.
    pub fn solve(&mut self, b: &[f64], x: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        assert_eq!(x.len(), n);
        let y = &mut self.work;
        for i in 0..n {
            y[i] = b[self.perm[i]];
        }
        // L y = Pb
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        // Lᵀ z = y, column sweep over the row-stored factor
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_2d(nx: usize, ny: usize) -> CsrMatrix {
        let id = |i: usize, j: usize| i + nx * j;
        let mut t = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                t.push((id(i, j), id(i, j), 4.0));
                if i + 1 < nx {
                    t.push((id(i, j), id(i + 1, j), -1.0));
                    t.push((id(i + 1, j), id(i, j), -1.0));
                }
                if j + 1 < ny {
                    t.push((id(i, j), id(i, j + 1), -1.0));
                    t.push((id(i, j + 1), id(i, j), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(nx * ny, nx * ny, &t)
    }

    #[test]
    fn rcm_is_a_permutation_with_small_bandwidth() {
        let a = laplacian_2d(40, 6);
        let p = rcm_ordering(&a);
        let mut seen = p.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..240).collect::<Vec<_>>());
        let mut inv = vec![0; 240];
        for (k, &o) in p.iter().enumerate() {
            inv[o] = k;
        }
        let bw = (0..240).flat_map(|r| a.row(r).map(move |(c, _)| (r, c))).map(|(r, c)| inv[r].abs_diff(inv[c])).max();
        assert!(bw.unwrap() <= 7, "{bw:?}");
    }

    #[test]
    fn solves_laplacian() {
        let a = laplacian_2d(13, 9);
        let n = a.nrows();
        let x_true: Vec<f64> = (0..n).map(|i| libm::sin(i as f64)).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x_true, &mut b);
        let mut f = EnvelopeCholesky::factor(&a).unwrap();
        let mut x = vec![0.0; n];
        f.solve(&b, &mut x);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn handles_disconnected_blocks() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 3.0), (2, 2, 4.0), (1, 2, 1.0), (2, 1, 1.0)]);
        let mut f = EnvelopeCholesky::factor(&a).unwrap();
        let mut x = [0.0; 3];
        f.solve(&[2.0, 4.0, 5.0], &mut x);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14 && (x[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn indefinite_breaks_down() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(EnvelopeCholesky::factor(&a).unwrap_err(), Error::Breakdown { .. }));
    }
}
