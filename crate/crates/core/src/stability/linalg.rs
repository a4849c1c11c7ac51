//! Small dense linear algebra: eigenvalues, matrix exponential, linear
//! solves. Intended for `n ≤ 8`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;
const QR_SWEEPS: usize = 10_000;
const JACOBI_SWEEPS: usize = 100;

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("matrix", "must be square"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix", "entries must be finite"));
    }
    Ok(m.nrows())
}

fn check_small(m: &DMatrix<f64>) -> Result<usize> {
    let n = check_square(m)?;
    if n > MAX_DIM {
        return Err(Error::invalid(
            "matrix",
            format!("dimension {n} exceeds {MAX_DIM}"),
        ));
    }
    Ok(n)
}

fn sort_complex(v: &mut [Complex<f64>]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Eigenvalues sorted by real part (then imaginary part): closed form for
/// `n ≤ 2`, shifted QR on the Hessenberg form otherwise.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = check_small(m)?;
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![Complex::new(m[(0, 0)], 0.0)]),
        2 => {
            let mut e = quadratic_roots(
                m[(0, 0)] + m[(1, 1)],
                m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
            );
            sort_complex(&mut e);
            Ok(e)
        }
        _ => eigenvalues_qr(m),
    }
}

/// Roots of `s² - trace·s + det`.
pub fn quadratic_roots(trace: f64, det: f64) -> Vec<Complex<f64>> {
    let half = 0.5 * trace;
    let disc = half * half - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        let big = if half >= 0.0 {
            half + root
        } else {
            half - root
        };
        let small = if big != 0.0 { det / big } else { 0.0 };
        vec![Complex::new(big, 0.0), Complex::new(small, 0.0)]
    } else {
        let im = (-disc).sqrt();
        vec![Complex::new(half, -im), Complex::new(half, im)]
    }
}

/// Eigenvalues by Hessenberg reduction and Francis double-shift QR, for any
/// size up to [`MAX_DIM`].
pub fn eigenvalues_qr(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = check_small(m)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based working copy
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = m[(i, j)];
        }
    }
    hessenberg(&mut a, n);
    let mut e = hqr(&mut a, n)?;
    sort_complex(&mut e);
    Ok(e)
}

fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x: f64 = 0.0;
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let t = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = t;
            }
            for row in a.iter_mut().skip(1) {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = 0.0;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for j in 1..=n {
                        a[j][m] += y * a[j][i];
                    }
                }
            }
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

fn hqr(a: &mut [Vec<f64>], n: usize) -> Result<Vec<Complex<f64>>> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                y = a[nn - 1][nn - 1];
                w = a[nn][nn - 1] * a[nn - 1][nn];
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == QR_SWEEPS {
                        return Err(Error::Numerical(format!(
                            "QR iteration did not converge after {QR_SWEEPS} sweeps"
                        )));
                    }
                    if its > 0 && its % 10 == 0 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            a[i][i] -= x;
                        }
                        let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k + 1 <= nn {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nn - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nn - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = nn.min(k + 3);
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nn - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 2 || l + 1 >= nn {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex::new(wr[i], wi[i])).collect())
}

/// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = check_square(m)?;
    let mut a = m.clone();
    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = sign(1.0, theta) / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut e: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const TAYLOR_ORDER: usize = 16;

/// `e^M` by scaling and squaring with a degree-16 Taylor polynomial.
pub fn matrix_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square(m)?;
    let norm = inf_norm(m);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let scaled = m / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=TAYLOR_ORDER {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Solves `A·x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = check_square(a)?;
    if b.len() != n {
        return Err(Error::invalid("b", "length differs from the matrix size"));
    }
    let mut m = a.clone();
    let mut x = b.clone();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .expect("nonempty range");
        if m[(pivot, col)].abs() <= 1e-14 * scale {
            return Err(Error::Numerical("singular linear system".into()));
        }
        if pivot != col {
            m.swap_rows(pivot, col);
            x.swap_rows(pivot, col);
        }
        for row in col + 1..n {
            let f = m[(row, col)] / m[(col, col)];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[(row, k)] -= f * m[(col, k)];
            }
            x[row] -= f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for k in row + 1..n {
            acc -= m[(row, k)] * x[k];
        }
        x[row] = acc / m[(row, row)];
    }
    Ok(x)
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square(a)?;
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
        out.set_column(j, &solve(a, &e)?);
    }
    Ok(out)
}

/// Singular values, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Moore-Penrose pseudoinverse; singular values below `rel_tol·σ_max` are
/// treated as zero.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    check_square(a)?;
    let svd = a.clone().svd(true, true);
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.pseudo_inverse(rel_tol * largest.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Numerical(e.to_string()))
}
