//! The conservative rank transform of a single kinon.
//!
//! A kinon with `N` links gathers its `N` inputs and its storage, encodes them
//! as `N + 1` ranks with a unit sum (storage last), passes every rank through
//! the kinetic map and decodes the modulated ranks back to absolute
//! quantities that add up to exactly what was gathered.
//!
//! Exactness comes from keeping every decoded quantity on a dyadic grid (see
//! [`Quantum`]): each component is rounded to the grid and the few grid steps
//! of rounding residue are handed to one component, so the decoded parts sum to
//! the gathered total with no floating-point error at all.

use crate::maps::KineticMap;
use crate::network::Quantum;
use crate::sum::compensated_sum;
use crate::{Error, Result};

/// Modulated rank sums at or below this retain everything in storage.
pub const EPS_SUM: f64 = 1e-15;

/// Relative negativity of decoded storage that counts as a numerical fault.
pub const EPS_NEG: f64 = 1e-9;

/// Buffers of one kinon: `N` link inputs, storage, `N` link outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct KinonLocal {
    pub inputs: Vec<f64>,
    pub storage: f64,
    pub outputs: Vec<f64>,
}

impl KinonLocal {
    pub fn new(inputs: Vec<f64>, storage: f64) -> Self {
        let outputs = vec![0.0; inputs.len()];
        KinonLocal { inputs, storage, outputs }
    }
}

fn check_quantity(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} = {v} is not a nonnegative finite quantity")))
    }
}

/// Converts inputs and storage to ranks. Returns the ranks (storage last) and
/// the gathered total.
pub fn encode(inputs: &[f64], storage: f64) -> Result<(Vec<f64>, f64)> {
    for (i, &v) in inputs.iter().enumerate() {
        check_quantity(&format!("input[{i}]"), v)?;
    }
    check_quantity("storage", storage)?;
    let mut buf: Vec<f64> = inputs.iter().copied().chain([storage]).collect();
    let total = encode_in_place(&mut buf);
    Ok((buf, total))
}

/// Applies `map` to every rank, storage included.
pub fn modulate(ranks: &[f64], map: &KineticMap) -> Result<Vec<f64>> {
    ranks.iter().map(|&r| map.eval(r)).collect()
}

/// Rescales modulated ranks to `total`. Returns link outputs and the new
/// storage.
///
/// The grid is the finest power of two that still divides `total`, capped at
/// [`Quantum::for_bound`]; see [`decode_on_grid`] to choose it explicitly.
pub fn decode(modulated: &[f64], total: f64) -> Result<(Vec<f64>, f64)> {
    check_quantity("total", total)?;
    decode_on_grid(modulated, total, Quantum::dividing(total))
}

/// [`decode`] on a caller-chosen grid. `total` must be a multiple of it.
pub fn decode_on_grid(modulated: &[f64], total: f64, quantum: Quantum) -> Result<(Vec<f64>, f64)> {
    check_quantity("total", total)?;
    if modulated.is_empty() {
        return Err(Error::Domain("modulated rank vector is empty".into()));
    }
    for (i, &m) in modulated.iter().enumerate() {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::Domain(format!("modulated rank [{i}] = {m} outside [0, 1]")));
        }
    }
    let mut buf = modulated.to_vec();
    allocate(&mut buf, total, quantum).map_err(|detail| Error::NumericalFault { step: 0, node: 0, detail })?;
    let storage = buf.pop().unwrap_or(0.0);
    Ok((buf, storage))
}

/// `decode(modulate(encode(local)))`.
pub fn step_kinon(local: &KinonLocal, map: &KineticMap) -> Result<KinonLocal> {
    let (ranks, total) = encode(&local.inputs, local.storage)?;
    let modulated = modulate(&ranks, map)?;
    let (outputs, storage) = decode(&modulated, total)?;
    Ok(KinonLocal { inputs: local.inputs.clone(), storage, outputs })
}

/// Replaces gathered quantities with ranks and returns their total.
#[inline]
pub(crate) fn encode_in_place(buf: &mut [f64]) -> f64 {
    let total = compensated_sum(buf.iter().copied());
    if total > 0.0 {
        for v in buf.iter_mut() {
            *v /= total;
        }
    } else {
        buf.fill(0.0);
    }
    total
}

/// The whole transform over one buffer: gathered quantities in (storage last),
/// link outputs and new storage out.
#[inline]
pub(crate) fn transform_in_place(buf: &mut [f64], map: &KineticMap, quantum: Quantum) -> std::result::Result<(), String> {
    let total = encode_in_place(buf);
    if total == 0.0 {
        return Ok(());
    }
    for r in buf.iter_mut() {
        *r = map.value_at(*r);
    }
    allocate(buf, total, quantum)
}

/// Decodes modulated ranks in place so that the components sum to `total`
/// exactly.
fn allocate(buf: &mut [f64], total: f64, quantum: Quantum) -> std::result::Result<(), String> {
    let last = buf.len() - 1;
    if total == 0.0 {
        buf.fill(0.0);
        return Ok(());
    }
    let modulated_sum = compensated_sum(buf.iter().copied());
    if modulated_sum <= EPS_SUM {
        buf.fill(0.0);
        buf[last] = total;
        return Ok(());
    }
    let factor = total / modulated_sum;
    // Grid values: these sums and the subtractions below are exact.
    let nearest: f64 = buf.iter().map(|v| quantum.snap(v * factor)).sum();
    let mut residual = total - nearest;
    let (_, vmax, ties) = strict_max(buf);
    let top = quantum.snap(vmax * factor);
    let kept = quantum.snap(buf[last] * factor);
    // A deficit nobody can absorb on its own: round everything down instead,
    // which leaves a surplus and keeps equal ranks equal.
    let floor = residual < 0.0 && !(ties == 1 && top + residual >= 0.0) && kept + residual < 0.0;
    if floor {
        for v in buf.iter_mut() {
            *v = quantum.floor(*v * factor);
        }
        residual = shave(buf, total, quantum);
    } else {
        for v in buf.iter_mut() {
            *v = quantum.snap(*v * factor);
        }
    }
    if residual != 0.0 {
        let (imax, vmax, ties) = strict_max(buf);
        if ties == 1 && vmax + residual >= 0.0 {
            buf[imax] += residual;
        } else {
            buf[last] += residual;
        }
    }
    let storage = buf[last];
    if storage < -EPS_NEG * total || buf.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(format!("decoded quantities {buf:?} from total {total}"));
    }
    Ok(())
}

/// Index of the first maximum, its value and how many components share it.
fn strict_max(buf: &[f64]) -> (usize, f64, usize) {
    let mut imax = 0;
    let mut vmax = buf[0];
    let mut ties = 1;
    for (i, &v) in buf.iter().enumerate().skip(1) {
        if v > vmax {
            imax = i;
            vmax = v;
            ties = 1;
        } else if v == vmax {
            ties += 1;
        }
    }
    (imax, vmax, ties)
}

/// Lowers every nonzero component by one grid step until the sum no longer
/// exceeds `total`. Equal components stay equal.
fn shave(buf: &mut [f64], total: f64, quantum: Quantum) -> f64 {
    let q = quantum.step();
    let mut residual = total - buf.iter().sum::<f64>();
    while residual < 0.0 {
        for v in buf.iter_mut() {
            if *v >= q {
                *v -= q;
            }
        }
        residual = total - buf.iter().sum::<f64>();
    }
    residual
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn encode_examples() {
        let (r, t) = encode(&[0.2, 0.4, 1.4], 0.0).unwrap();
        assert_eq!(r, vec![0.1, 0.2, 0.7, 0.0]);
        assert_eq!(t, 2.0);
        let (r, t) = encode(&[1.0, 1.0], 2.0).unwrap();
        assert_eq!(r, vec![0.25, 0.25, 0.5]);
        assert_eq!(t, 4.0);
        let (r, t) = encode(&[0.0, 0.0], 0.0).unwrap();
        assert_eq!(r, vec![0.0; 3]);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn encode_rejects_bad_quantities() {
        assert!(encode(&[0.1, -0.2], 0.0).is_err());
        assert!(encode(&[0.1, f64::NAN], 0.0).is_err());
        assert!(encode(&[0.1], f64::INFINITY).is_err());
        assert!(encode(&[0.1], -1.0).is_err());
    }

    #[test]
    fn modulate_examples() {
        let ranks = [0.1, 0.2, 0.7, 0.0];
        assert_eq!(modulate(&ranks, &KineticMap::Identity).unwrap(), ranks.to_vec());
        let sq = modulate(&ranks, &KineticMap::Gamma(0.5)).unwrap();
        assert!(close(&sq, &[0.316228, 0.447214, 0.836660, 0.0], 1e-6));
        assert!((sq.iter().sum::<f64>() - 1.6).abs() < 1e-3);
        let neg = modulate(&[0.25, 0.25, 0.5], &KineticMap::Negative).unwrap();
        assert_eq!(neg, vec![0.75, 0.75, 0.5]);
    }

    #[test]
    fn decode_examples() {
        let m = [0.1f64.sqrt(), 0.2f64.sqrt(), 0.7f64.sqrt(), 0.0];
        let (out, s) = decode(&m, 2.0).unwrap();
        let oracle: Vec<f64> = m[..3].iter().map(|v| 2.0 * v / (m[0] + m[1] + m[2])).collect();
        assert!(close(&out, &oracle, 1e-12), "{out:?}");
        assert!(close(&out, &[0.395260, 0.558982, 1.045758], 1e-6), "{out:?}");
        assert_eq!(s, 0.0);
        assert_eq!(out.iter().sum::<f64>() + s, 2.0);

        let (out, s) = decode(&[0.1, 0.2, 0.7, 0.0], 2.0).unwrap();
        assert!(close(&out, &[0.2, 0.4, 1.4], 1e-12));
        assert_eq!(out.iter().sum::<f64>() + s, 2.0);

        let (out, s) = decode(&[0.0; 4], 5.0).unwrap();
        assert_eq!(out, vec![0.0; 3]);
        assert_eq!(s, 5.0);
    }

    #[test]
    fn decode_rejects_out_of_range_ranks() {
        assert!(decode(&[0.5, 1.5], 1.0).is_err());
        assert!(decode(&[0.5, 0.5], -1.0).is_err());
    }

    #[test]
    fn step_kinon_examples() {
        let local = KinonLocal::new(vec![0.3, 1.7], 0.9);
        let next = step_kinon(&local, &KineticMap::Identity).unwrap();
        assert!(close(&next.outputs, &[0.3, 1.7], 1e-12));
        assert!((next.storage - 0.9).abs() < 1e-12);

        let local = KinonLocal::new(vec![0.25, 1.75], 1.0);
        let next = step_kinon(&local, &KineticMap::Identity).unwrap();
        assert_eq!(next.outputs, vec![0.25, 1.75]);
        assert_eq!(next.storage, 1.0);

        let local = KinonLocal::new(vec![0.2, 0.4, 1.4], 0.0);
        let next = step_kinon(&local, &KineticMap::Gamma(0.5)).unwrap();
        assert!(close(&next.outputs, &[0.395260, 0.558982, 1.045758], 1e-6));
        assert_eq!(next.storage, 0.0);

        let local = KinonLocal::new(vec![0.0, 0.0], 0.7);
        let next = step_kinon(&local, &KineticMap::Negative).unwrap();
        assert_eq!(next.outputs[0], next.outputs[1]);
        assert!((next.outputs[0] - 0.35).abs() < 1e-15);
        assert_eq!(next.outputs[0] + next.outputs[1] + next.storage, 0.7);
    }

    #[test]
    fn zero_total_is_inert() {
        let next = step_kinon(&KinonLocal::new(vec![0.0; 4], 0.0), &KineticMap::Negative).unwrap();
        assert_eq!(next.outputs, vec![0.0; 4]);
        assert_eq!(next.storage, 0.0);
    }

    #[test]
    fn degenerate_modulation_keeps_everything() {
        // Gamma maps zero ranks to zero; a kinon with only storage keeps it.
        let next = step_kinon(&KinonLocal::new(vec![0.0, 0.0], 3.0), &KineticMap::Gamma(2.0)).unwrap();
        assert_eq!(next.outputs, vec![0.0, 0.0]);
        assert_eq!(next.storage, 3.0);
        let zero_map = crate::maps::make_spline(&[[0.0, 0.0], [1.0, 0.0]], 1).unwrap();
        let next = step_kinon(&KinonLocal::new(vec![1.0, 2.0], 3.0), &zero_map).unwrap();
        assert_eq!(next.outputs, vec![0.0, 0.0]);
        assert_eq!(next.storage, 6.0);
    }

    #[test]
    fn equal_largest_outputs_push_residue_to_storage() {
        // Three equal inputs: thirds do not land on the grid, and the three
        // maxima must stay equal.
        let local = KinonLocal::new(vec![1.0, 1.0, 1.0], 0.0);
        let next = step_kinon(&local, &KineticMap::Gamma(0.7)).unwrap();
        assert_eq!(next.outputs[0], next.outputs[1]);
        assert_eq!(next.outputs[1], next.outputs[2]);
        assert!(next.storage >= 0.0);
        assert_eq!(next.outputs.iter().sum::<f64>() + next.storage, 3.0);
    }
}
