//! Dense reference implementations used as independent oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statecov::classic::LinearGaussianModel;
use statecov::{StateSequence, StateSpaceModel};

/// Dense `(C, a, V')` built from the generic composite form:
/// `Psi = V dc + (c^T (x) I) dV`, `C = omega I + Psi^T Psi`, `a = Psi^T V c`,
/// and `V'` the gradient rows of the diagonal entries of `V`.
pub struct DenseAssembly {
    pub c: DMatrix<f64>,
    pub a: DVector<f64>,
    pub vscript: DMatrix<f64>,
    pub vdiag: DVector<f64>,
    pub psi: DMatrix<f64>,
    pub f1: DVector<f64>,
}

pub fn dense_assembly<M: StateSpaceModel>(model: &M, x: &StateSequence, omega: f64) -> DenseAssembly {
    let n = model.state_dim();
    let steps = model.num_steps();
    let dim = n * steps;

    // Row offsets, with the process block of each step before its measurement block.
    let mut rows_of: Vec<(usize, usize)> = Vec::new();
    let mut total = 0;
    for k in 0..steps {
        rows_of.push((total, total + n));
        total += n + model.meas_dim(k);
    }

    let mut c = DVector::zeros(total);
    let mut dc = DMatrix::zeros(total, dim);
    let mut v = DMatrix::zeros(total, total);
    // grad_v[(i, j)] = d V_ij / dx (length nN); only nonzero inside diagonal blocks.
    let mut grad_v: Vec<Vec<(usize, DVector<f64>)>> = vec![Vec::new(); total];

    for k in 0..steps {
        let xk = x.block(k);
        let (p0, m0) = rows_of[k];
        let m = model.meas_dim(k);
        let mean = if k == 0 { model.prior_mean() } else { model.process(k, &x.block(k - 1)) };
        let w = &xk - mean;
        let r = model.observe(k, &xk) - model.measurement(k);
        for i in 0..n {
            c[p0 + i] = w[i];
            dc[(p0 + i, k * n + i)] = 1.0;
        }
        if k > 0 {
            let g = model.process_jacobian(k, &x.block(k - 1));
            for i in 0..n {
                for j in 0..n {
                    dc[(p0 + i, (k - 1) * n + j)] = -g[(i, j)];
                }
            }
        }
        let h = model.observe_jacobian(k, &xk);
        for i in 0..m {
            c[m0 + i] = r[i];
            for j in 0..n {
                dc[(m0 + i, k * n + j)] = h[(i, j)];
            }
        }
        let blocks = [
            (p0, model.process_factor(k, &xk), model.process_factor_derivative(k, &xk)),
            (m0, model.measurement_factor(k, &xk), model.measurement_factor_derivative(k, &xk)),
        ];
        for (off, f, df) in blocks {
            let d = f.nrows();
            for i in 0..d {
                for j in 0..d {
                    v[(off + i, off + j)] = f[(i, j)];
                    let mut g = DVector::zeros(dim);
                    for l in 0..n {
                        g[k * n + l] = df.rows()[i][(j, l)];
                    }
                    grad_v[off + i].push((off + j, g));
                }
            }
        }
    }

    let mut kron = DMatrix::zeros(total, dim);
    for (row, entries) in grad_v.iter().enumerate() {
        for (col, g) in entries {
            let mut r = kron.row_mut(row);
            r += g.transpose() * c[*col];
        }
    }
    let psi = &v * &dc + kron;
    let f1 = &v * &c;
    let cmat = DMatrix::identity(dim, dim) * omega + psi.transpose() * &psi;
    let a = psi.transpose() * &f1;
    let mut vscript = DMatrix::zeros(total, dim);
    let mut vdiag = DVector::zeros(total);
    for (row, entries) in grad_v.iter().enumerate() {
        for (col, g) in entries {
            if *col == row {
                vscript.row_mut(row).copy_from(&g.transpose());
            }
        }
        vdiag[row] = v[(row, row)];
    }
    DenseAssembly { c: cmat, a, vscript, vdiag, psi, f1 }
}

/// Primal damped Newton on `1/2 d^T C d + a^T d - sum log(v + V' d)` with
/// dense matrices and a feasibility-preserving Armijo backtrack.
pub fn dense_barrier_newton(c: &DMatrix<f64>, a: &DVector<f64>, v: &DVector<f64>, vs: &DMatrix<f64>) -> DVector<f64> {
    let f = |d: &DVector<f64>| {
        let s = v + vs * d;
        if s.iter().any(|&si| si <= 0.0) {
            return f64::INFINITY;
        }
        0.5 * d.dot(&(c * d)) + a.dot(d) - s.iter().map(|si| si.ln()).sum::<f64>()
    };
    let mut d = DVector::zeros(a.len());
    for _ in 0..500 {
        let s = v + vs * &d;
        let inv = s.map(|si| 1.0 / si);
        let grad = c * &d + a - vs.transpose() * &inv;
        let hess = c + vs.transpose() * DMatrix::from_diagonal(&inv.component_mul(&inv)) * vs;
        let step = -hess.clone().lu().solve(&grad).expect("barrier hessian is nonsingular");
        let decrement = -grad.dot(&step);
        if decrement < 1e-24 {
            break;
        }
        let f0 = f(&d);
        let mut t = 1.0;
        while f(&(&d + &step * t)) > f0 - 0.25 * t * decrement {
            t *= 0.5;
            if t < 1e-16 {
                break;
            }
        }
        d += step * t;
    }
    d
}

pub fn random_spd(rng: &mut impl Rng, dim: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(dim, dim) * ridge
}

/// Random linear-Gaussian model with measurements drawn uniformly.
pub fn random_linear_model(seed: u64, n: usize, m: usize, steps: usize) -> (LinearGaussianModel, Vec<DVector<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let mut transitions = Vec::new();
    let mut q = Vec::new();
    let mut h = Vec::new();
    let mut r = Vec::new();
    let mut z = Vec::new();
    for _ in 0..steps {
        transitions.push(DMatrix::from_fn(n, n, |i, j| rng.gen_range(-0.3..0.3) + if i == j { 0.9 } else { 0.0 }));
        q.push(random_spd(&mut rng, n, 0.2));
        h.push(DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0)));
        r.push(random_spd(&mut rng, m, 0.2));
        z.push(DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0)));
    }
    (LinearGaussianModel::new(prior, transitions, q, h, r).unwrap(), z)
}

/// Minimizer of the quadratic negative log posterior restricted to steps
/// `0..=last`, from the dense normal equations.
pub fn dense_map(model: &LinearGaussianModel, z: &[DVector<f64>], last: usize) -> Vec<DVector<f64>> {
    let n = model.state_dim();
    let steps = last + 1;
    let dim = n * steps;
    let mut normal = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for k in 0..steps {
        // process term: |x_k - F x_{k-1} - b|^2_{Q^-1}
        let qinv = model.process_cov[k].clone().try_inverse().unwrap();
        let mut j = DMatrix::zeros(n, dim);
        j.view_mut((0, k * n), (n, n)).fill_with_identity();
        let mut b = DVector::zeros(n);
        if k == 0 {
            b = model.prior_mean.clone();
        } else {
            j.view_mut((0, (k - 1) * n), (n, n)).copy_from(&(-&model.transitions[k]));
        }
        normal += j.transpose() * &qinv * &j;
        rhs += j.transpose() * &qinv * b;
        // measurement term: |H x_k - z_k|^2_{R^-1}
        let hk = &model.observations[k];
        let rinv = model.meas_cov[k].clone().try_inverse().unwrap();
        let mut jm = DMatrix::zeros(hk.nrows(), dim);
        jm.view_mut((0, k * n), hk.shape()).copy_from(hk);
        normal += jm.transpose() * &rinv * &jm;
        rhs += jm.transpose() * &rinv * &z[k];
    }
    let x = normal.lu().solve(&rhs).unwrap();
    (0..steps).map(|k| x.rows(k * n, n).into_owned()).collect()
}

/// Central finite-difference gradient of a scalar function of a state sequence.
pub fn fd_gradient(f: impl Fn(&StateSequence) -> f64, x: &StateSequence, eps: f64) -> DVector<f64> {
    let len = x.as_vector().len();
    DVector::from_fn(len, |i, _| {
        let mut e = DVector::zeros(len);
        e[i] = eps;
        (f(&x.step(1.0, &e)) - f(&x.step(-1.0, &e))) / (2.0 * eps)
    })
}
