use super::{Core, Train, TtVector};
use crate::la::{self, Matrix};

/// Makes cores `1..d` right-orthogonal; the norm ends up in core 0.
pub fn orthogonalize_right(cores: &mut [Core]) {
    for k in (1..cores.len()).rev() {
        let core = &cores[k];
        let (n, r1) = (core.n, core.r1);
        let rt = core.right().transpose();
        let qr = rt.qr();
        let q = qr.q();
        let r = qr.r();
        cores[k] = Core::from_right(n, r1, &q.transpose());
        let prev = &cores[k - 1];
        let left = prev.left() * r.transpose();
        cores[k - 1] = Core::from_left(prev.r0, prev.n, &left);
    }
}

/// Makes cores `0..d-1` left-orthogonal; the norm ends up in the last core.
pub fn orthogonalize_left(cores: &mut [Core]) {
    for k in 0..cores.len().saturating_sub(1) {
        let core = &cores[k];
        let (r0, n) = (core.r0, core.n);
        let qr = core.left().qr();
        let q = qr.q();
        let r = qr.r();
        cores[k] = Core::from_left(r0, n, &q);
        let next = &cores[k + 1];
        let right = r * next.right();
        cores[k + 1] = Core::from_right(next.n, next.r1, &right);
    }
}

/// Recompresses a train: right-to-left QR, then left-to-right truncated SVDs with
/// per-bond threshold `tol/√(d−1)·‖x‖`, so the result is within `tol·‖x‖` of `x`.
pub fn tt_round<T: Train>(x: &T, tol: f64, rmax: usize) -> T {
    x.rewrap(round_train(x.as_train(), tol, rmax))
}

pub(crate) fn round_train(x: &TtVector, tol: f64, rmax: usize) -> TtVector {
    let d = x.d();
    let mut cores = x.cores().to_vec();
    if d == 1 {
        return x.clone();
    }
    // Product of core norms bounds ‖x‖; anything below rounding noise of that bound is
    // cancellation debris (e.g. x − x) and is returned as an exact zero.
    let bound: f64 = cores
        .iter()
        .map(|c| c.data.iter().map(|v| v * v).sum::<f64>().sqrt())
        .product();
    orthogonalize_right(&mut cores);
    let norm = cores[0].data.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || norm <= 16.0 * d as f64 * f64::EPSILON * bound {
        return TtVector::zeros(&x.mode_sizes());
    }
    let delta = tol.max(0.0) / ((d - 1) as f64).sqrt() * norm;
    let rmax = rmax.max(1);
    for k in 0..d - 1 {
        let core = &cores[k];
        let (r0, n) = (core.r0, core.n);
        let full = la::svd(&core.left()).expect("orthogonalized cores are finite");
        let rank = la::rank_for_tail(&full.s, delta)
            .clamp(1, rmax)
            .min(full.s.len());
        let svd = la::truncate_to(full, rank);
        cores[k] = Core::from_left(r0, n, &svd.u);
        let mut sv: Matrix = svd.vt;
        for (b, s) in svd.s.iter().enumerate() {
            sv.row_mut(b).scale_mut(*s);
        }
        let next = &cores[k + 1];
        let right = sv * next.right();
        cores[k + 1] = Core::from_right(next.n, next.r1, &right);
    }
    TtVector::from_cores_unchecked(cores)
}
