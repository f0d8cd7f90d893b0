//! Deliberately naive reference implementations.
//!
//! Nothing here shares code with the production paths it is compared against:
//! the silhouette oracle recomputes every distance inside a double loop, the
//! eigensolver is a self-contained Householder tridiagonalisation followed by
//! implicit QL, and the dummy-variable regression builds the full design and
//! solves it by Householder QR.

use ndarray::{Array1, Array2, ArrayView2};

/// Silhouette by the textbook definition, O(n² d) with no caching.
pub fn naive_silhouette(points: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let n = points.nrows();
    let dist = |i: usize, j: usize| -> f64 {
        points
            .row(i)
            .iter()
            .zip(points.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut clusters: Vec<usize> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();

    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        let own_size = labels.iter().filter(|&&l| l == own).count();
        if own_size == 1 {
            continue;
        }
        let mut a = 0.0;
        for j in 0..n {
            if j != i && labels[j] == own {
                a += dist(i, j);
            }
        }
        a /= (own_size - 1) as f64;
        let mut b = f64::INFINITY;
        for &c in &clusters {
            if c == own {
                continue;
            }
            let mut sum = 0.0;
            let mut count = 0usize;
            for j in 0..n {
                if labels[j] == c {
                    sum += dist(i, j);
                    count += 1;
                }
            }
            b = b.min(sum / count as f64);
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Sample covariance with an explicit triple loop.
pub fn naive_covariance(points: ArrayView2<f64>) -> Array2<f64> {
    let (n, d) = points.dim();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            mean[j] += points[(i, j)];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Array2::<f64>::zeros((d, d));
    for i in 0..n {
        for a in 0..d {
            let xa = points[(i, a)] - mean[a];
            for b in a..d {
                cov[(a, b)] += xa * (points[(i, b)] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// Eigen-decomposition of a symmetric matrix: eigenvalues in descending order
/// and the matching unit eigenvectors as columns.
pub fn symmetric_eigen(matrix: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "matrix must be square");
    if n == 0 {
        return (Array1::zeros(0), Array2::zeros((0, 0)));
    }
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| matrix.row(i).to_vec()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    implicit_ql(&mut v, &mut d, &mut e);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[r][order[c]]);
    (values, vectors)
}

// Householder reduction to tridiagonal form (EISPACK tred2).
fn tridiagonalize(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[n - 1][j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for row in v.iter_mut().take(i + 1) {
            row[i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit QL iterations on the tridiagonal form (EISPACK tql2).
fn implicit_ql(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

/// Least squares by Householder QR of the full design. Returns the
/// coefficient vector; panics on a rank-deficient design.
pub fn qr_least_squares(design: ArrayView2<f64>, y: &[f64]) -> Vec<f64> {
    let (n, p) = design.dim();
    assert!(n >= p, "underdetermined system");
    let mut a: Vec<Vec<f64>> = (0..p).map(|j| design.column(j).to_vec()).collect();
    let mut b = y.to_vec();
    let mut diag = vec![0.0; p];
    for k in 0..p {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0, "rank-deficient design (column {k})");
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut house: Vec<f64> = a[k][k..].to_vec();
        house[0] -= alpha;
        let hn = house.iter().map(|v| v * v).sum::<f64>();
        diag[k] = alpha;
        if hn > 0.0 {
            for col in a.iter_mut().skip(k + 1) {
                let dot: f64 = house.iter().zip(&col[k..]).map(|(h, c)| h * c).sum();
                let f = 2.0 * dot / hn;
                for (c, h) in col[k..].iter_mut().zip(&house) {
                    *c -= f * h;
                }
            }
            let dot: f64 = house.iter().zip(&b[k..]).map(|(h, c)| h * c).sum();
            let f = 2.0 * dot / hn;
            for (c, h) in b[k..].iter_mut().zip(&house) {
                *c -= f * h;
            }
        }
    }
    let scale = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        assert!(diag[k].abs() > 1e-11 * scale, "rank-deficient design (column {k})");
        let mut s = b[k];
        for j in k + 1..p {
            s -= a[j][k] * beta[j];
        }
        beta[k] = s / diag[k];
    }
    beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_of_known_matrix() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = symmetric_eigen(m.view());
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        let v0 = vecs.column(0);
        assert!((v0[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((v0[0] - v0[1]).abs() < 1e-14);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let m = array![[4.0, 1.0, -2.0, 0.5], [1.0, 3.0, 0.0, 1.0], [-2.0, 0.0, 5.0, -1.0], [0.5, 1.0, -1.0, 2.0]];
        let (vals, vecs) = symmetric_eigen(m.view());
        let back = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        assert!((&back - &m).iter().all(|v| v.abs() < 1e-12));
        assert!(vals.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn qr_solves_exact_system() {
        let x = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let y = [1.0, 3.0, 5.0, 7.0];
        let b = qr_least_squares(x.view(), &y);
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn naive_silhouette_hand_case() {
        let x = array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        assert_eq!(naive_silhouette(x.view(), &[0, 0, 1, 1]), 1.0);
    }
}
