//! Dense convex quadratic program solver used for both solvers'
//! direction-finding subproblems, plus the assembly of those subproblems
//! from penalty-function linearizations.
//!
//! The solver handles strictly convex QPs
//!
//! ```text
//!     minimize    1/2 x' H x + g' x
//!     subject to  A x <= b
//! ```
//!
//! with H symmetric positive definite, by the dual active-set method of
//! Goldfarb and Idnani. The dual method starts from the unconstrained
//! minimizer (always dual feasible), adds one violated constraint at a
//! time, and maintains the active-set factorization by Givens updates.
//! Because every intermediate working set is linearly independent by
//! construction, the method is robust on the heavily degenerate stacked
//! subproblems produced by gradient sampling, where many near-parallel
//! constraint rows are simultaneously active at the optimum. A final
//! null-space polish on the returned active set restores the KKT
//! residual to certificate level when the ridge terms on slack
//! variables leave H ill-conditioned.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Certified KKT residual bound for returned solutions, one order below
/// the solvers' 1e-8 stationarity tolerance.
pub const KKT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("QP iteration limit exceeded")]
    MaxIterations,
    #[error("QP Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("QP is infeasible (violation {0:.3e})")]
    Infeasible(f64),
    #[error("QP dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular KKT system in active-set step")]
    SingularKkt,
}

/// Dense strictly convex QP with linear inequality constraints.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// Constraint rows of A x <= b; may be empty.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Optional primal-feasible point, kept as a warm-start hint. The
    /// dual method does not need one and currently ignores it.
    pub initial_point: Option<DVector<f64>>,
    /// Optional initial active set, kept as a warm-start hint. The dual
    /// method builds its own active set and currently ignores it.
    pub initial_active: Option<Vec<usize>>,
}

impl QpProblem {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        QpProblem {
            hessian,
            linear,
            a,
            b,
            initial_point: None,
            initial_active: None,
        }
    }

    fn check(&self) -> Result<(), QpError> {
        let d = self.linear.len();
        if self.hessian.nrows() != d || self.hessian.ncols() != d {
            return Err(QpError::DimensionMismatch(format!(
                "hessian is {}x{} but linear term has length {d}",
                self.hessian.nrows(),
                self.hessian.ncols()
            )));
        }
        if self.a.nrows() != self.b.len() || (self.a.nrows() > 0 && self.a.ncols() != d) {
            return Err(QpError::DimensionMismatch(format!(
                "constraints are {}x{} with rhs length {}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.len()
            )));
        }
        if let Some(x0) = &self.initial_point {
            if x0.len() != d {
                return Err(QpError::DimensionMismatch("initial point length".into()));
            }
        }
        Ok(())
    }
}

/// Minimizer, multipliers and KKT certificate of a solved QP.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row, zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub active_set: Vec<usize>,
}

/// Solves the equality-constrained subproblem
/// `min 1/2 p' H p - rhs_top' p  s.t.  A_W p = 0`
/// by a null-space method: the null basis of A_W comes from the
/// eigendecomposition of the Gram matrix A_W' A_W (rank decided at
/// relative tolerance 1e-10), the reduced system Z' H Z is SPD with
/// conditioning bounded by H alone, and the multipliers are the
/// min-norm least-squares solution of A_W' lam = rhs_top - H p.
///
/// This stays accurate even when the working set is nearly dependent,
/// where the raw KKT matrix is numerically singular.
fn solve_kkt(
    h: &DMatrix<f64>,
    a_w: &DMatrix<f64>,
    rhs_top: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let d = h.nrows();
    let w = a_w.nrows();
    if w == 0 {
        let chol = h.clone().cholesky()?;
        return Some((chol.solve(rhs_top), DVector::zeros(0)));
    }

    let gram = a_w.transpose() * a_w;
    let eig = gram.symmetric_eigen();
    let lam_max = eig.eigenvalues.amax();
    // Rank cut at sigma ~ 1e-10 * sigma_max, i.e. eigenvalue 1e-20 rel.
    let cut = 1e-20 * lam_max;
    let null_cols: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] <= cut).collect();
    if null_cols.is_empty() {
        return Some((DVector::zeros(d), multipliers_for(a_w, rhs_top)));
    }
    let mut z = DMatrix::zeros(d, null_cols.len());
    for (j, &c) in null_cols.iter().enumerate() {
        z.column_mut(j).copy_from(&eig.eigenvectors.column(c));
    }

    let hz = z.transpose() * h * &z;
    let gz = z.transpose() * rhs_top;
    let q = match hz.clone().cholesky() {
        Some(ch) => {
            let mut q = ch.solve(&gz);
            // One reduced-space refinement step.
            let r = &gz - &hz * &q;
            q += ch.solve(&r);
            q
        }
        None => hz.full_piv_lu().solve(&gz)?,
    };
    let p = &z * q;
    let lam = multipliers_for(a_w, &(rhs_top - h * &p));
    Some((p, lam))
}

/// Min-norm least-squares multipliers for `A_W' lam = res`.
fn multipliers_for(a_w: &DMatrix<f64>, res: &DVector<f64>) -> DVector<f64> {
    let gram = a_w * a_w.transpose();
    let rhs = a_w * res;
    let svd = gram.svd(true, true);
    let cutoff = 1e-14 * svd.singular_values.max().max(1e-300);
    svd.solve(&rhs, cutoff)
        .unwrap_or_else(|_| DVector::zeros(a_w.nrows()))
}

fn gather_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(idx.len(), a.ncols());
    for (i, &r) in idx.iter().enumerate() {
        m.row_mut(i).copy_from(&a.row(r));
    }
    m
}

// --- dense kernels for the dual active-set iteration ------------------
//
// These operate on row-major slices: the dual method maintains the
// inverse Cholesky factor J = L^-T of H and the triangular factor R of
// the active rows in J-coordinates, both updated in place by Givens
// rotations as constraints enter and leave the active set.

fn usqrt(val: usize) -> usize {
    (val as f64).sqrt() as usize
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(xi, yi)| xi * yi).sum()
}

fn scal(mult: f64, vec: &mut [f64]) {
    for val in vec {
        *val *= mult;
    }
}

/// Solve a * x = b in place, where a is upper triangular (row-major).
fn triangular_solve(mat: &[f64], vec: &mut [f64]) {
    let n = vec.len();
    debug_assert_eq!(mat.len(), n * n);
    for k in (0..n).rev() {
        vec[k] /= mat[k + k * n];
        axpy(-vec[k], &mat[k * n..k * n + k], &mut vec[..k]);
    }
}

/// Solve transpose(a) * x = b in place, where a is upper triangular.
fn triangular_solve_transpose(mat: &[f64], vec: &mut [f64]) {
    let n = vec.len();
    debug_assert_eq!(mat.len(), n * n);
    for k in 0..n {
        vec[k] -= dot(&mat[k * n..k * n + k], &vec[..k]);
        vec[k] /= mat[k + k * n];
    }
}

/// Invert an upper triangular matrix in place.
fn triangular_invert(mat: &mut [f64]) {
    let n = usqrt(mat.len());
    debug_assert_eq!(mat.len(), n * n);
    for k in 0..n {
        mat[k + k * n] = 1.0 / mat[k + k * n];
        scal(-mat[k + k * n], &mut mat[k * n..k * n + k]);

        let (left, right) = mat.split_at_mut(n + k * n);

        for j in 0..n - k - 1 {
            axpy(
                right[k + j * n],
                &left[k * n..k * n + k],
                &mut right[j * n..j * n + k],
            );
            right[k + j * n] *= left[k + k * n];
        }
    }
}

/// In-place Cholesky: writes the upper factor R with a = R' R into the
/// upper triangle of a, erring if a is not positive definite.
fn cholesky_in_place(mat: &mut [f64]) -> Result<(), QpError> {
    let n = usqrt(mat.len());
    debug_assert_eq!(n * n, mat.len());
    for j in 0..n {
        for k in 0..j {
            mat[k + j * n] = (mat[k + j * n] - dot(&mat[k * n..k * n + k], &mat[j * n..j * n + k]))
                / mat[k + k * n];
        }

        let s = mat[j + j * n] - dot(&mat[j * n..j * n + j], &mat[j * n..j * n + j]);
        if s <= 0.0 {
            return Err(QpError::NotPositiveDefinite);
        }

        mat[j + j * n] = s.sqrt();
    }

    Ok(())
}

/// sqrt(a^2 + b^2) without intermediate overflow.
fn givens_hypot(left: f64, right: f64) -> f64 {
    let (min, max) = if left < right {
        (left, right)
    } else {
        (right, left)
    };
    let ratio = min / max;
    max * (1.0 + ratio * ratio).sqrt()
}

/// Length-`len` slices ending at and starting from `split` (for a
/// row-major matrix: two neighboring rows).
fn left_right_slices<T>(slice: &mut [T], split: usize, len: usize) -> (&mut [T], &mut [T]) {
    let (left, right) = slice.split_at_mut(split);
    (&mut left[split - len..], &mut right[..len])
}

/// Apply Givens rotations zeroing the components of `vec` beyond the
/// r-th, applying the same rotations to the columns of `mat`. The
/// trailing elements of `vec` are not actually written to zero.
fn qr_insert(r: usize, vec: &mut [f64], mat: &mut [f64]) {
    let n = vec.len();
    debug_assert_eq!(mat.len(), n * n);
    debug_assert!(r <= n);
    for i in (r..n).rev() {
        // On this iteration, reduce vec[i] to zero.
        if vec[i] == 0.0 {
            continue;
        }

        let (left, right) = left_right_slices(mat, i * n, n);
        if vec[i - 1] == 0.0 {
            vec[i - 1] = vec[i];
            left.swap_with_slice(right);
        } else {
            let h = givens_hypot(vec[i - 1], vec[i]).copysign(vec[i - 1]);
            let gc = vec[i - 1] / h;
            let gs = vec[i] / h;
            // Saves a fourth multiplication in the inner loop below.
            let nu = vec[i] / (vec[i - 1] + h);
            vec[i - 1] = h;

            for (li, ri) in left.iter_mut().zip(right.iter_mut()) {
                let temp = gc * *li + gs * *ri;
                *ri = nu * (*li + temp) - *ri;
                *li = temp;
            }
        }
    }
}

/// Drop the col-th column of the packed upper triangular factor `rmat`,
/// restoring triangular form by Givens rotations applied likewise to
/// the columns of `qmat`. `rmat` holds an r x r upper triangle as
/// packed columns (r*(r+1)/2 elements in, (r-1)*r/2 meaningful out).
fn qr_delete(col: usize, qmat: &mut [f64], rmat: &mut [f64]) {
    let n = usqrt(qmat.len());
    debug_assert_eq!(qmat.len(), n * n);
    let r = (usqrt(8 * rmat.len() + 1) - 1) / 2;
    debug_assert_eq!(r * (r + 1) / 2, rmat.len());

    for i in col..r {
        // Reduce the (i+1, i+1) element of R to zero, then move column
        // i+1 to position i. rmat[l] is that diagonal element.
        let di = i * (i + 1) / 2;
        let l = di + i;
        if rmat[l] == 0.0 {
            continue;
        }

        let (left, right) = left_right_slices(qmat, i * n, n);
        if rmat[l - 1] == 0.0 {
            let mut ind = l;
            for j in i + 1..=r {
                rmat.swap(ind - 1, ind);
                ind += j;
            }

            left.swap_with_slice(right);
        } else {
            let h = givens_hypot(rmat[l - 1], rmat[l]).copysign(rmat[l - 1]);
            let gc = rmat[l - 1] / h;
            let gs = rmat[l] / h;
            let nu = rmat[l] / (rmat[l - 1] + h);

            let mut ind = l;
            for j in i + 1..=r {
                let temp = gc * rmat[ind - 1] + gs * rmat[ind];
                rmat[ind] = nu * (rmat[ind - 1] + temp) - rmat[ind];
                rmat[ind - 1] = temp;
                ind += j;
            }

            for (li, ri) in left.iter_mut().zip(right.iter_mut()) {
                let temp = gc * *li + gs * *ri;
                *ri = nu * (*li + temp) - *ri;
                *li = temp;
            }
        }

        let (left, right) = left_right_slices(rmat, di, i);
        left.swap_with_slice(right);
    }
}

struct DualSolution {
    sol: Vec<f64>,
    lagr: Vec<f64>,
    iact: Vec<usize>,
}

/// Goldfarb-Idnani dual active-set iteration for
/// `min 1/2 x' H x + g' x  s.t.  A x <= b` with H positive definite.
///
/// `qmat` is row-major H (destroyed), `amat` is row-major A. Starts at
/// the unconstrained minimizer, repeatedly adds the most violated
/// constraint, taking dual steps (dropping active constraints whose
/// multiplier would go negative) until the new constraint is satisfied.
/// An unbounded dual step proves primal infeasibility.
fn dual_active_set(
    qmat: &mut [f64],
    cvec: &[f64],
    amat: &[f64],
    bvec: &[f64],
    max_additions: usize,
) -> Result<DualSolution, QpError> {
    let n = cvec.len();
    let q = bvec.len();
    let r = n.min(q);
    debug_assert_eq!(qmat.len(), n * n);
    debug_assert_eq!(amat.len(), n * q);

    let mut dv = vec![0.0; n];
    let mut zv = vec![0.0; n];
    let mut rv_mem = vec![0.0; r];
    let mut rmat = vec![0.0; r * (r + 1) / 2];
    let mut sv = vec![0.0; q];
    let mut nbv = vec![0.0; q];

    let mut iact: Vec<usize> = Vec::with_capacity(r);
    let mut uv: Vec<f64> = Vec::with_capacity(r);

    // Unconstrained minimizer H^-1 (-g), leaving J = L^-T in qmat.
    let mut sol = cvec.to_owned();
    scal(-1.0, &mut sol);
    cholesky_in_place(qmat)?;
    triangular_solve_transpose(qmat, &mut sol);
    triangular_solve(qmat, &mut sol);
    triangular_invert(qmat);
    for j in 0..n {
        for i in j + 1..n {
            qmat[i + j * n] = 0.0;
        }
    }

    // Row norms of A, used in the pivoting rule.
    for (nbvi, arow) in nbv.iter_mut().zip(amat.chunks_exact(n)) {
        *nbvi = dot(arow, arow).sqrt();
    }

    let mut additions = 0_usize;
    loop {
        // Slacks b - A x, forced to zero on the active set as a
        // safeguard against rounding.
        for ((arow, bvi), svi) in amat.chunks_exact(n).zip(bvec).zip(sv.iter_mut()) {
            *svi = bvi - dot(&sol, arow);
        }
        for ind in iact.iter().copied() {
            sv[ind] = 0.0;
        }

        // Most violated constraint, scaled by row norm.
        let mut iadd = q;
        let mut max_violation = 0.0;
        for (i, (svi, nbvi)) in sv.iter().zip(nbv.iter()).enumerate() {
            if *svi < -max_violation * nbvi - f64::EPSILON {
                iadd = i;
                max_violation = -svi / nbvi;
            }
        }
        if iadd == q {
            break;
        }
        additions += 1;
        if additions > max_additions {
            // Rounding can cycle the iteration over noise-level
            // violations it cannot reduce further. Accept the current
            // point when what remains is at certificate level (the
            // reported KKT residual stays honest); a genuine stall
            // with macroscopic violation is still an error.
            let scale = 1.0 + sol.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
            if max_violation <= 1e-8 * scale {
                break;
            }
            return Err(QpError::MaxIterations);
        }

        let aadd = &amat[iadd * n..(iadd + 1) * n];
        let mut slack = sv[iadd];
        let mut u = 0.0;

        loop {
            // dv = J' a, split into d_1 (active rows) and d_2.
            for (dvi, jrow) in dv.iter_mut().zip(qmat.chunks_exact(n)) {
                *dvi = -dot(jrow, aadd);
            }

            // zv = J_2 d_2: primal step direction.
            zv.fill(0.0);
            for (jrow, dvi) in qmat.chunks_exact(n).zip(dv.iter()).skip(iact.len()) {
                axpy(*dvi, jrow, &mut zv);
            }

            // rv = R^-1 d_1: negative dual step direction.
            let rv = &mut rv_mem[..iact.len()];
            rv.clone_from_slice(&dv[..iact.len()]);
            for i in (0..iact.len()).rev() {
                let start = i * (i + 1) / 2;
                rv[i] /= rmat[start + i];
                axpy(-rv[i], &rmat[start..start + i], &mut rv[..i]);
            }

            // Largest dual step t1 before an active multiplier hits zero.
            let mut idel = r;
            let mut t1 = f64::INFINITY;
            for (i, (uvi, rvi)) in uv.iter().zip(rv.iter()).enumerate() {
                if *rvi > 0.0 {
                    let temp = uvi / rvi;
                    if temp < t1 {
                        t1 = temp;
                        idel = i;
                    }
                }
            }

            // Step t2 bringing the entering constraint's slack to zero.
            let t2 = if dot(&zv, &zv).abs() <= f64::EPSILON {
                f64::INFINITY
            } else {
                slack / dot(&zv, aadd)
            };
            if t1 == f64::INFINITY && t2 == f64::INFINITY {
                return Err(QpError::Infeasible(-slack));
            }

            let partial_step = t2 > t1;
            let step = if partial_step { t1 } else { t2 };

            axpy(step, &zv, &mut sol);
            axpy(-step, rv, &mut uv);
            u += step;

            if !partial_step {
                break;
            }

            // Dual step was blocked: drop constraint idel and retry.
            let rlen = iact.len() * (iact.len() + 1) / 2;
            qr_delete(idel + 1, qmat, &mut rmat[..rlen]);
            uv.remove(idel);
            iact.remove(idel);
            slack = bvec[iadd] - dot(&sol, aadd);
        }

        uv.push(u);
        iact.push(iadd);
        qr_insert(iact.len(), &mut dv, qmat);
        let start = iact.len() * (iact.len() - 1) / 2;
        rmat[start..start + iact.len()].clone_from_slice(&dv[..iact.len()]);
    }

    let mut lagr = vec![0.0; q];
    for (act, uvi) in iact.iter().copied().zip(uv) {
        lagr[act] = uvi;
    }

    Ok(DualSolution { sol, lagr, iact })
}

/// Solves the QP by the Goldfarb-Idnani dual active-set method, with a
/// null-space polish of the final active set when rounding in the
/// factor updates leaves the KKT residual above the certificate level.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.check()?;
    let d = p.linear.len();
    let m = p.a.nrows();

    // Row-major copies for the slice-based dual iteration.
    let mut qmat = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            qmat[j + i * d] = p.hessian[(i, j)];
        }
    }
    let cvec: Vec<f64> = p.linear.iter().copied().collect();
    let mut amat = vec![0.0; m * d];
    for i in 0..m {
        for j in 0..d {
            amat[j + i * d] = p.a[(i, j)];
        }
    }
    let bvec: Vec<f64> = p.b.iter().copied().collect();

    // The dual method is finite in exact arithmetic; the cap only
    // guards against rounding-induced cycling.
    let max_additions = 10 * (d + m) + 100;
    let dual = dual_active_set(&mut qmat, &cvec, &amat, &bvec, max_additions)?;

    let mut x = DVector::from_vec(dual.sol);
    let mut multipliers = DVector::from_vec(dual.lagr);
    for l in multipliers.iter_mut() {
        *l = l.max(0.0);
    }
    let mut active_set = dual.iact;
    active_set.sort_unstable();
    let mut residual = kkt_residual(p, &x, &multipliers);

    if residual > KKT_TOL {
        if let Some((px, pl)) = polish_on_active_set(p, &active_set) {
            let pr = kkt_residual(p, &px, &pl);
            if pr < residual {
                x = px;
                multipliers = pl;
                residual = pr;
            }
        }
    }

    let objective = 0.5 * x.dot(&(&p.hessian * &x)) + p.linear.dot(&x);
    Ok(QpSolution {
        x,
        multipliers,
        objective,
        kkt_residual: residual,
        active_set,
    })
}

/// Re-solves the equality-constrained QP on a fixed active set W by
/// iterative refinement of the KKT system: each round solves for the
/// correction (particular part through the SVD of A_W itself, not its
/// gram matrix, plus the null-space part from `solve_kkt`) against the
/// current stationarity and primal residuals. The first round from zero
/// is the plain solve; later rounds contract the residual because their
/// errors are relative to an already-small right-hand side.
fn polish_on_active_set(
    p: &QpProblem,
    active: &[usize],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let d = p.linear.len();
    let w = active.len();
    let a_w = gather_rows(&p.a, active);
    let b_w = DVector::from_iterator(w, active.iter().map(|&i| p.b[i]));
    let svd = (w > 0).then(|| a_w.clone().svd(true, true));
    let cutoff = svd
        .as_ref()
        .map(|s| 1e-12 * s.singular_values.max().max(1e-300))
        .unwrap_or(0.0);

    let mut x = DVector::zeros(d);
    let mut lam = DVector::zeros(w);
    for _ in 0..3 {
        let r_prim = &b_w - &a_w * &x;
        let r_stat = -(&p.hessian * &x + &p.linear) - a_w.transpose() * &lam;
        let dx_p = match &svd {
            Some(s) => s.solve(&r_prim, cutoff).ok()?,
            None => DVector::zeros(d),
        };
        let (step, dlam) =
            solve_kkt(&p.hessian, &a_w, &(r_stat - &p.hessian * &dx_p))?;
        x += dx_p + step;
        lam += dlam;
    }

    let mut multipliers = DVector::zeros(p.a.nrows());
    for (j, &row) in active.iter().enumerate() {
        multipliers[row] = lam[j].max(0.0);
    }
    Some((x, multipliers))
}

/// Max-norm KKT residual: stationarity, primal and dual feasibility,
/// and complementarity.
pub fn kkt_residual(p: &QpProblem, x: &DVector<f64>, multipliers: &DVector<f64>) -> f64 {
    let stat = (&p.hessian * x + &p.linear + p.a.transpose() * multipliers).amax();
    let mut primal = 0.0f64;
    let mut compl = 0.0f64;
    let mut dual = 0.0f64;
    if p.a.nrows() > 0 {
        let r = &p.a * x - &p.b;
        for i in 0..r.len() {
            primal = primal.max(r[i].max(0.0));
            compl = compl.max((multipliers[i] * r[i]).abs());
            dual = dual.max((-multipliers[i]).max(0.0));
        }
    }
    stat.max(primal).max(compl).max(dual)
}

/// A scalar function's contribution to a direction subproblem: the value
/// at the current iterate and one or more gradients (the center gradient
/// plus any sampled gradients).
#[derive(Debug, Clone)]
pub struct FunctionLinearization {
    pub value: f64,
    pub gradients: Vec<DVector<f64>>,
}

impl FunctionLinearization {
    pub fn single(value: f64, gradient: DVector<f64>) -> Self {
        FunctionLinearization {
            value,
            gradients: vec![gradient],
        }
    }
}

/// Maps the stacked decision vector `[d; z?; r_ineq; r_eq]` of an
/// assembled subproblem back to its components.
#[derive(Debug, Clone)]
pub struct PenaltyQpLayout {
    pub dim: usize,
    pub has_objective_slack: bool,
    pub n_ineq: usize,
    pub n_eq: usize,
}

impl PenaltyQpLayout {
    pub fn total_vars(&self) -> usize {
        self.dim + usize::from(self.has_objective_slack) + self.n_ineq + self.n_eq
    }

    pub fn direction(&self, sol: &QpSolution) -> DVector<f64> {
        sol.x.rows(0, self.dim).into_owned()
    }

    /// Slack values r^j for the inequality constraints followed by the
    /// equality constraints.
    pub fn slacks(&self, sol: &QpSolution) -> DVector<f64> {
        let off = self.dim + usize::from(self.has_objective_slack);
        sol.x.rows(off, self.n_ineq + self.n_eq).into_owned()
    }
}

/// Small curvature placed on the slack variables so the stacked Hessian
/// stays positive definite; the slack block is otherwise linear.
fn slack_ridge(h: &DMatrix<f64>) -> f64 {
    1e-8 * (1.0 + h.trace() / h.nrows() as f64)
}

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("gradient dimension mismatch in subproblem assembly")]
    DimensionMismatch,
    #[error("empty gradient set for a sampled function")]
    EmptySampleSet,
}

fn check_lin(dim: usize, lin: &FunctionLinearization) -> Result<(), AssembleError> {
    if lin.gradients.is_empty() {
        return Err(AssembleError::EmptySampleSet);
    }
    if lin.gradients.iter().any(|g| g.len() != dim) {
        return Err(AssembleError::DimensionMismatch);
    }
    Ok(())
}

/// Assembles the gradient-sampling direction subproblem: slack z bounds
/// every sampled linearization of the objective, slack r^j >= 0 bounds
/// every sampled linearization of constraint j, and equalities enter as
/// two-sided rows sharing one slack.
///
/// The QP is feasible by construction; a feasible start is embedded.
pub fn assemble_sqpgs_qp(
    objective: &FunctionLinearization,
    inequalities: &[FunctionLinearization],
    equalities: &[FunctionLinearization],
    rho: f64,
    hessian: &DMatrix<f64>,
) -> Result<(QpProblem, PenaltyQpLayout), AssembleError> {
    let dim = hessian.nrows();
    check_lin(dim, objective)?;
    for c in inequalities.iter().chain(equalities) {
        check_lin(dim, c)?;
    }
    let layout = PenaltyQpLayout {
        dim,
        has_objective_slack: true,
        n_ineq: inequalities.len(),
        n_eq: equalities.len(),
    };
    let nv = layout.total_vars();
    let ridge = slack_ridge(hessian);

    let mut h = DMatrix::zeros(nv, nv);
    h.view_mut((0, 0), (dim, dim)).copy_from(hessian);
    for i in dim..nv {
        h[(i, i)] = ridge;
    }
    let mut g = DVector::zeros(nv);
    g[dim] = rho; // objective slack z
    for i in dim + 1..nv {
        g[i] = 1.0; // constraint slacks r^j
    }

    let n_rows: usize = objective.gradients.len()
        + inequalities.iter().map(|c| c.gradients.len()).sum::<usize>()
        + 2 * equalities.iter().map(|c| c.gradients.len()).sum::<usize>()
        + layout.n_ineq;
    let mut a = DMatrix::zeros(n_rows, nv);
    let mut b = DVector::zeros(n_rows);
    let mut row = 0;

    // grad' d - z <= -f0  for every sampled objective gradient
    for grad in &objective.gradients {
        for (j, &gj) in grad.iter().enumerate() {
            a[(row, j)] = gj;
        }
        a[(row, dim)] = -1.0;
        b[row] = -objective.value;
        row += 1;
    }
    // grad' d - r_j <= -c_j0
    for (j, c) in inequalities.iter().enumerate() {
        let slack_col = dim + 1 + j;
        for grad in &c.gradients {
            for (i, &gi) in grad.iter().enumerate() {
                a[(row, i)] = gi;
            }
            a[(row, slack_col)] = -1.0;
            b[row] = -c.value;
            row += 1;
        }
    }
    // +-(c0 + grad' d) <= r_j for equalities
    for (j, c) in equalities.iter().enumerate() {
        let slack_col = dim + 1 + layout.n_ineq + j;
        for grad in &c.gradients {
            for sign in [1.0f64, -1.0] {
                for (i, &gi) in grad.iter().enumerate() {
                    a[(row, i)] = sign * gi;
                }
                a[(row, slack_col)] = -1.0;
                b[row] = -sign * c.value;
                row += 1;
            }
        }
    }
    // r_j >= 0 for inequality slacks; for equality slacks the bound is
    // implied by each +/- row pair (their sum is -2 r_j <= 0) and adding
    // it explicitly would create a linearly dependent active set.
    for j in 0..layout.n_ineq {
        a[(row, dim + 1 + j)] = -1.0;
        b[row] = 0.0;
        row += 1;
    }
    debug_assert_eq!(row, n_rows);

    // Feasible start: d = 0, z = f0, r_j = max(c_j0, 0) or |c_j0|.
    let mut x0 = DVector::zeros(nv);
    x0[dim] = objective.value;
    for (j, c) in inequalities.iter().enumerate() {
        x0[dim + 1 + j] = c.value.max(0.0);
    }
    for (j, c) in equalities.iter().enumerate() {
        x0[dim + 1 + layout.n_ineq + j] = c.value.abs();
    }

    let mut qp = QpProblem::new(h, g, a, b);
    qp.initial_point = Some(x0);
    Ok((qp, layout))
}

/// Assembles the steering direction subproblem: objective enters through
/// its linearization weighted by rho (dropped entirely at rho = 0), each
/// constraint through a single gradient with slack r^j >= 0.
pub fn assemble_steering_qp(
    objective: &FunctionLinearization,
    inequalities: &[FunctionLinearization],
    equalities: &[FunctionLinearization],
    rho: f64,
    hessian: &DMatrix<f64>,
) -> Result<(QpProblem, PenaltyQpLayout), AssembleError> {
    let dim = hessian.nrows();
    check_lin(dim, objective)?;
    for c in inequalities.iter().chain(equalities) {
        check_lin(dim, c)?;
    }
    let layout = PenaltyQpLayout {
        dim,
        has_objective_slack: false,
        n_ineq: inequalities.len(),
        n_eq: equalities.len(),
    };
    let nv = layout.total_vars();
    let ridge = slack_ridge(hessian);

    let mut h = DMatrix::zeros(nv, nv);
    h.view_mut((0, 0), (dim, dim)).copy_from(hessian);
    for i in dim..nv {
        h[(i, i)] = ridge;
    }
    let mut g = DVector::zeros(nv);
    for (j, &gj) in objective.gradients[0].iter().enumerate() {
        g[j] = rho * gj;
    }
    for i in dim..nv {
        g[i] = 1.0;
    }

    let n_rows = layout.n_ineq
        + 2 * equalities.iter().map(|c| c.gradients.len()).sum::<usize>()
        + layout.n_ineq;
    let mut a = DMatrix::zeros(n_rows, nv);
    let mut b = DVector::zeros(n_rows);
    let mut row = 0;

    for (j, c) in inequalities.iter().enumerate() {
        let grad = &c.gradients[0];
        for (i, &gi) in grad.iter().enumerate() {
            a[(row, i)] = gi;
        }
        a[(row, dim + j)] = -1.0;
        b[row] = -c.value;
        row += 1;
    }
    for (j, c) in equalities.iter().enumerate() {
        let slack_col = dim + layout.n_ineq + j;
        for grad in &c.gradients {
            for sign in [1.0f64, -1.0] {
                for (i, &gi) in grad.iter().enumerate() {
                    a[(row, i)] = sign * gi;
                }
                a[(row, slack_col)] = -1.0;
                b[row] = -sign * c.value;
                row += 1;
            }
        }
    }
    // Equality-slack nonnegativity is implied by the +/- row pairs.
    for j in 0..layout.n_ineq {
        a[(row, dim + j)] = -1.0;
        b[row] = 0.0;
        row += 1;
    }
    debug_assert_eq!(row, n_rows);

    let mut x0 = DVector::zeros(nv);
    for (j, c) in inequalities.iter().enumerate() {
        x0[dim + j] = c.value.max(0.0);
    }
    for (j, c) in equalities.iter().enumerate() {
        x0[dim + layout.n_ineq + j] = c.value.abs();
    }

    let mut qp = QpProblem::new(h, g, a, b);
    qp.initial_point = Some(x0);
    Ok((qp, layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_kkt_single_constraint() {
        // min 1/2 d^2 s.t. -d <= -1  ->  d* = 1, lambda = 1
        let p = QpProblem::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DVector::from_row_slice(&[-1.0]),
        );
        let s = solve_qp(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.multipliers[0], 1.0, epsilon = 1e-12);
        assert!(s.kkt_residual <= KKT_TOL);
    }

    #[test]
    fn unconstrained_newton_step() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::from_row_slice(&[-1.0, -2.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        );
        let s = solve_qp(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let p = QpProblem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        );
        assert!(matches!(solve_qp(&p), Err(QpError::NotPositiveDefinite)));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(3),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        );
        assert!(matches!(solve_qp(&p), Err(QpError::DimensionMismatch(_))));
    }

    #[test]
    fn infeasible_detected() {
        // x <= -1 and -x <= -1 cannot both hold.
        let p = QpProblem::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_row_slice(&[-1.0, -1.0]),
        );
        assert!(matches!(solve_qp(&p), Err(QpError::Infeasible(_))));
    }

    #[test]
    fn constrained_minimum_behind_violated_row() {
        // Unconstrained minimizer (origin) violates x1 + x2 >= 1.
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]),
            DVector::from_row_slice(&[-1.0]),
        );
        let s = solve_qp(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[1], 0.5, epsilon = 1e-9);
        assert!(s.kkt_residual <= KKT_TOL);
    }

    #[test]
    fn steering_assembly_collapses_to_bfgs_direction() {
        // One objective gradient, zero constraints, rho=1, H=I:
        // solution is the plain quasi-Newton step -H^{-1} grad f.
        let grad = DVector::from_row_slice(&[3.0, -2.0]);
        let obj = FunctionLinearization::single(5.0, grad.clone());
        let (qp, layout) = assemble_steering_qp(&obj, &[], &[], 1.0, &DMatrix::identity(2, 2)).unwrap();
        let s = solve_qp(&qp).unwrap();
        let d = layout.direction(&s);
        assert_abs_diff_eq!(d[0], -3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(d[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn steering_assembly_rho_zero_ignores_objective() {
        let h = DMatrix::identity(2, 2);
        let ineq = vec![FunctionLinearization::single(
            1.0,
            DVector::from_row_slice(&[1.0, 0.0]),
        )];
        let obj_a = FunctionLinearization::single(5.0, DVector::from_row_slice(&[100.0, -7.0]));
        let obj_b = FunctionLinearization::single(-2.0, DVector::from_row_slice(&[-3.0, 42.0]));
        let (qp_a, lay) = assemble_steering_qp(&obj_a, &ineq, &[], 0.0, &h).unwrap();
        let (qp_b, _) = assemble_steering_qp(&obj_b, &ineq, &[], 0.0, &h).unwrap();
        let da = lay.direction(&solve_qp(&qp_a).unwrap());
        let db = lay.direction(&solve_qp(&qp_b).unwrap());
        assert_abs_diff_eq!(da[0], db[0], epsilon = 1e-10);
        assert_abs_diff_eq!(da[1], db[1], epsilon = 1e-10);
    }

    #[test]
    fn steering_direction_reduces_linearized_violation() {
        // 2-variable toy with one violated constraint c(x) = x1 - 1 at x = (2, 0):
        // value 1, gradient (1, 0).
        let h = DMatrix::identity(2, 2);
        let obj = FunctionLinearization::single(2.0, DVector::from_row_slice(&[1.0, 0.0]));
        let ineq = vec![FunctionLinearization::single(
            1.0,
            DVector::from_row_slice(&[1.0, 0.0]),
        )];
        let (qp, lay) = assemble_sqpgs_qp(&obj, &ineq, &[], 1.0, &h).unwrap();
        let s = solve_qp(&qp).unwrap();
        let d = lay.direction(&s);
        let lin_after = (1.0 + d[0]).max(0.0);
        assert!(lin_after < 1.0, "direction must reduce linearized violation");
        assert!(s.kkt_residual <= KKT_TOL);
    }

    #[test]
    fn sqpgs_assembly_single_sample_is_bfgs_direction() {
        let grad = DVector::from_row_slice(&[1.0, 4.0]);
        let obj = FunctionLinearization::single(0.0, grad.clone());
        let (qp, lay) = assemble_sqpgs_qp(&obj, &[], &[], 1.0, &DMatrix::identity(2, 2)).unwrap();
        let s = solve_qp(&qp).unwrap();
        let d = lay.direction(&s);
        // Accuracy limited by the slack ridge times the active slack value.
        assert_abs_diff_eq!(d[0], -1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(d[1], -4.0, epsilon = 1e-5);
    }

    #[test]
    fn sqpgs_violated_constraint_keeps_positive_slack() {
        // An equality whose linearization cannot be zeroed within a
        // reasonable step keeps its slack positive at the optimum.
        let h = DMatrix::identity(1, 1) * 100.0;
        let obj = FunctionLinearization::single(0.0, DVector::zeros(1));
        let eqs = vec![FunctionLinearization::single(
            5.0,
            DVector::from_row_slice(&[1.0]),
        )];
        let (qp, lay) = assemble_sqpgs_qp(&obj, &[], &eqs, 1.0, &h).unwrap();
        let s = solve_qp(&qp).unwrap();
        let slacks = lay.slacks(&s);
        assert!(slacks[0] > 1e-3, "slack should stay positive: {}", slacks[0]);
    }

    #[test]
    fn assembly_rejects_mismatched_gradient() {
        let obj = FunctionLinearization::single(0.0, DVector::zeros(3));
        let r = assemble_steering_qp(&obj, &[], &[], 1.0, &DMatrix::identity(2, 2));
        assert!(matches!(r, Err(AssembleError::DimensionMismatch)));
    }
}
