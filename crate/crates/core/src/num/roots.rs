//! Scalar root finding by bisection.

use super::Real;
use crate::error::{Error, Result};

/// Finds a root of `f` on `[lo, hi]` by bisection.
///
/// Requires a sign change on the bracket. Stops when the bracket width drops
/// below `xtol` (absolute) or after `max_iter` halvings, returning the
/// midpoint.
pub fn bisect<F: Real>(
    f: &mut impl FnMut(F) -> F,
    mut lo: F,
    mut hi: F,
    xtol: F,
    max_iter: usize,
) -> Result<F> {
    if lo >= hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::validation("bisection bracket must satisfy lo < hi"));
    }
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == F::zero() {
        return Ok(lo);
    }
    if fhi == F::zero() {
        return Ok(hi);
    }
    if (flo > F::zero()) == (fhi > F::zero()) {
        return Err(Error::computation(format!(
            "no sign change on bracket [{lo}, {hi}]: f={flo}, {fhi}"
        )));
    }
    for _ in 0..max_iter {
        let mid = (lo + hi) * F::half();
        if hi - lo <= xtol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == F::zero() {
            return Ok(mid);
        }
        if (fm > F::zero()) == (flo > F::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * F::half())
}
