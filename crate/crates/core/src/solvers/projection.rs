//! Euclidean projections onto the l1 ball and the weighted group-norm ball.
//!
//! Both reduce to finding the threshold `lambda >= 0` solving
//! `sum_g w_g * max(0, a_g - lambda * w_g) = t`, where `a_g` is the norm of
//! block `g` and `w_g` its weight. The left side is piecewise linear and
//! decreasing in `lambda`, so sorting the breakpoints `a_g / w_g` gives the
//! exact root in `O(G log G)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::types::Groups;

fn check_input(v: &DVector<f64>, t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("radius must be finite and >= 0, got {t}")));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("cannot project a vector with non-finite entries"));
    }
    Ok(())
}

/// Accept a point whose norm exceeds `t` only by summation rounding, so a
/// projected point is a fixed point of the projection.
fn within(norm: f64, t: f64, terms: usize) -> bool {
    norm <= t * (1.0 + 2.0 * terms as f64 * f64::EPSILON)
}

/// Root `lambda` of `sum_g w_g * max(0, a_g - lambda * w_g) = t`, assuming
/// `sum_g w_g a_g > t > 0`.
fn threshold(norms: &[f64], weights: &[f64], t: f64) -> f64 {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    // descending breakpoints a_g / w_g
    order.sort_by(|&a, &b| {
        (norms[b] / weights[b])
            .partial_cmp(&(norms[a] / weights[a]))
            .unwrap()
    });
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut lambda = 0.0;
    for &g in &order {
        let (a, w) = (norms[g], weights[g]);
        let cand = (s1 + w * a - t) / (s2 + w * w);
        if a / w > cand {
            s1 += w * a;
            s2 += w * w;
            lambda = cand;
        } else {
            break;
        }
    }
    lambda.max(0.0)
}

/// Projection of `v` onto `{beta : ||beta||_1 <= t}`.
///
/// Returns `v` unchanged (bit for bit) when it is already feasible.
pub fn project_l1_ball(v: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    check_input(v, t)?;
    Ok(project_l1_unchecked(v, t))
}

pub(crate) fn project_l1_unchecked(v: &DVector<f64>, t: f64) -> DVector<f64> {
    if within(v.lp_norm(1), t, v.len()) {
        return v.clone();
    }
    if t == 0.0 {
        return DVector::zeros(v.len());
    }
    let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let ones = vec![1.0; v.len()];
    let lambda = threshold(&abs, &ones, t);
    let out = v.map(|x| x.signum() * (x.abs() - lambda).max(0.0));
    clamp_norm(out, t, |w| w.lp_norm(1))
}

/// The threshold carries rounding relative to the input's norm, which can
/// dwarf `t`; a final rescale restores feasibility to within `within`.
fn clamp_norm(mut out: DVector<f64>, t: f64, norm: impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    for _ in 0..3 {
        let nrm = norm(&out);
        if within(nrm, t, out.len()) {
            break;
        }
        out *= t / nrm;
    }
    out
}

/// Projection of `v` onto `{beta : sum_g sqrt(|g|) ||beta_g||_2 <= t}`.
pub fn project_group_ball(v: &DVector<f64>, groups: &Groups, t: f64) -> Result<DVector<f64>> {
    check_input(v, t)?;
    if groups.p() != v.len() {
        return Err(Error::DimensionMismatch {
            what: "group partition vs vector",
            expected: v.len(),
            found: groups.p(),
        });
    }
    Ok(project_group_unchecked(v, groups, t))
}

pub(crate) fn project_group_unchecked(v: &DVector<f64>, groups: &Groups, t: f64) -> DVector<f64> {
    if within(groups.norm(v), t, v.len()) {
        return v.clone();
    }
    if t == 0.0 {
        return DVector::zeros(v.len());
    }
    let norms: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt())
        .collect();
    let weights: Vec<f64> = groups.iter().map(|g| (g.len() as f64).sqrt()).collect();
    let lambda = threshold(&norms, &weights, t);
    let mut out = DVector::zeros(v.len());
    for ((g, &a), &w) in groups.iter().zip(&norms).zip(&weights) {
        let keep = a - lambda * w;
        if keep > 0.0 {
            let scale = keep / a;
            for &j in g {
                out[j] = v[j] * scale;
            }
        }
    }
    clamp_norm(out, t, |w| groups.norm(w))
}
