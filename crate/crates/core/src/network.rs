//! Network state and the synchronous two-phase step.

use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::crt::transform_in_place;
use crate::maps::KineticMap;
use crate::topology::Topology;
use crate::{Error, Result};

/// A power-of-two grid that every quantity in a network is a multiple of.
///
/// All quantities are nonnegative and their sum is bounded by the network
/// total, so on a grid of `2^(e - 44)` for a total below `2^e` every partial
/// sum is an integer multiple of the grid step below `2^53`. Floating-point
/// addition of such values is exact in any order, which makes conservation an
/// identity rather than an approximation. The nine spare bits keep the grid
/// coarse enough that rounding noise of a few ulps (as in the identity map's
/// divide-then-multiply) always snaps back to the original value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantum(f64);

impl Quantum {
    pub const GUARD_BITS: i32 = 9;

    /// Grid for a network whose total quantity is at most `bound`.
    pub fn for_bound(bound: f64) -> Self {
        let bound = if bound.is_finite() && bound > 0.0 { bound } else { 1.0 };
        let mut e = bound.log2().ceil() as i32;
        while pow2(e) < bound {
            e += 1;
        }
        while e > -1000 && pow2(e - 1) >= bound {
            e -= 1;
        }
        Quantum(pow2(e - 53 + Self::GUARD_BITS))
    }

    /// The coarser of [`for_bound`](Self::for_bound) and the lowest set bit of
    /// `total`, so that `total` itself is a multiple of the grid.
    pub fn dividing(total: f64) -> Self {
        let grid = Self::for_bound(total);
        if total == 0.0 || !total.is_finite() {
            return grid;
        }
        let bits = total.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, scale) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
        let lowest = pow2(scale + mantissa.trailing_zeros() as i32);
        Quantum(grid.0.min(lowest))
    }

    pub fn step(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn snap(self, x: f64) -> f64 {
        (x / self.0).round() * self.0
    }

    #[inline]
    pub fn floor(self, x: f64) -> f64 {
        (x / self.0).floor() * self.0
    }

    pub fn contains(self, x: f64) -> bool {
        self.snap(x) == x
    }
}

fn pow2(e: i32) -> f64 {
    if e >= -1022 {
        2f64.powi(e)
    } else {
        2f64.powi(-1022) * 2f64.powi(e + 1022)
    }
}

/// Storage per kinon and in-flight quantity per half-link.
///
/// `inputs()[l]` is the quantity that travelled along half-link `l` and now
/// waits at `l`'s target. Kinon `u` emits its outputs onto its own outgoing
/// half-links, so propagation is a pure move.
#[derive(Clone, Debug)]
pub struct NetworkState {
    topology: Arc<Topology>,
    storage: Vec<f64>,
    inputs: Vec<f64>,
    step: u64,
    quantum: Quantum,
    spare: Vec<f64>,
}

impl PartialEq for NetworkState {
    fn eq(&self, other: &Self) -> bool {
        self.bitwise_eq(other)
    }
}

impl NetworkState {
    /// Builds a state at step 0 and puts every quantity on the network's grid.
    pub fn new(topology: Arc<Topology>, storage: Vec<f64>, inputs: Vec<f64>) -> Result<Self> {
        if storage.len() != topology.node_count() {
            return Err(Error::invalid("storage", format!("{} values for {} nodes", storage.len(), topology.node_count())));
        }
        if inputs.len() != topology.half_link_count() {
            return Err(Error::invalid("inputs", format!("{} values for {} half-links", inputs.len(), topology.half_link_count())));
        }
        for (what, values) in [("storage", &storage), ("inputs", &inputs)] {
            if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!("{what}[{i}]"), format!("{} is not a nonnegative finite quantity", values[i])));
            }
        }
        let bound = crate::sum::compensated_sum(storage.iter().chain(&inputs).copied());
        Ok(Self::on_grid(topology, storage, inputs, Quantum::for_bound(bound)))
    }

    pub(crate) fn on_grid(topology: Arc<Topology>, mut storage: Vec<f64>, mut inputs: Vec<f64>, quantum: Quantum) -> Self {
        for v in storage.iter_mut().chain(inputs.iter_mut()) {
            *v = quantum.snap(*v);
        }
        NetworkState { topology, storage, inputs, step: 0, quantum, spare: Vec::new() }
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn storage(&self) -> &[f64] {
        &self.storage
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn quantum(&self) -> Quantum {
        self.quantum
    }

    /// Internal energy: the sum of all storage.
    pub fn internal(&self) -> f64 {
        self.storage.iter().sum()
    }

    /// External energy: the sum of all quantity in transit.
    pub fn external(&self) -> f64 {
        self.inputs.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.internal() + self.external()
    }

    /// Quantity waiting at `node` that arrived from `neighbor`.
    pub fn input_from(&self, node: usize, neighbor: usize) -> Option<f64> {
        self.topology.link(neighbor, node).map(|l| self.inputs[l])
    }

    /// Storage plus everything waiting at the node: what it will gather next.
    pub fn gathered(&self, node: usize) -> f64 {
        let topo = &self.topology;
        topo.outgoing(node).map(|l| self.inputs[topo.reverse(l)]).sum::<f64>() + self.storage[node]
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        fn same(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        self.step == other.step && same(&self.storage, &other.storage) && same(&self.inputs, &other.inputs)
    }

    /// One synchronous step with every kinon using `map`.
    pub fn step_network(&mut self, map: &KineticMap) -> Result<()> {
        #[cfg(feature = "parallel")]
        {
            self.step_parallel(map)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.step_sequential(map)
        }
    }

    /// Phase 1 then phase 2, one kinon after another.
    pub fn step_sequential(&mut self, map: &KineticMap) -> Result<()> {
        let mut next = std::mem::take(&mut self.spare);
        next.resize(self.inputs.len(), 0.0);
        let topo = &*self.topology;
        let (inputs, quantum, step) = (&self.inputs, self.quantum, self.step);
        let mut buf = Vec::with_capacity(topo.max_degree() + 1);
        for (node, (storage, out)) in self.storage.iter_mut().zip(split_by_node(&mut next, topo)).enumerate() {
            transform_node(topo, inputs, node, storage, out, map, quantum, &mut buf).map_err(|detail| fault(step, node, detail))?;
        }
        self.finish(next);
        Ok(())
    }

    /// Same contract as [`step_sequential`](Self::step_sequential), with
    /// kinons transformed on the rayon pool. Results are bitwise identical.
    #[cfg(feature = "parallel")]
    pub fn step_parallel(&mut self, map: &KineticMap) -> Result<()> {
        let mut next = std::mem::take(&mut self.spare);
        next.resize(self.inputs.len(), 0.0);
        let topo = &*self.topology;
        let (inputs, quantum, step) = (&self.inputs, self.quantum, self.step);
        let outs = split_by_node(&mut next, topo);
        self.storage
            .par_iter_mut()
            .zip(outs)
            .enumerate()
            .with_min_len(256)
            .try_for_each_init(
                || Vec::with_capacity(topo.max_degree() + 1),
                |buf, (node, (storage, out))| {
                    transform_node(topo, inputs, node, storage, out, map, quantum, buf).map_err(|detail| fault(step, node, detail))
                },
            )?;
        self.finish(next);
        Ok(())
    }

    /// Phase 2: the freshly written outputs become the inputs.
    fn finish(&mut self, next: Vec<f64>) {
        self.spare = std::mem::replace(&mut self.inputs, next);
        self.step += 1;
    }
}

/// Splits a per-half-link buffer into each node's outgoing range.
fn split_by_node<'a>(mut buf: &'a mut [f64], topo: &Topology) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(topo.node_count());
    for node in 0..topo.node_count() {
        let (head, tail) = buf.split_at_mut(topo.degree(node));
        out.push(head);
        buf = tail;
    }
    out
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn transform_node(
    topo: &Topology,
    inputs: &[f64],
    node: usize,
    storage: &mut f64,
    out: &mut [f64],
    map: &KineticMap,
    quantum: Quantum,
    buf: &mut Vec<f64>,
) -> std::result::Result<(), String> {
    buf.clear();
    buf.extend(topo.outgoing(node).map(|l| inputs[topo.reverse(l)]));
    buf.push(*storage);
    transform_in_place(buf, map, quantum)?;
    let degree = out.len();
    out.copy_from_slice(&buf[..degree]);
    *storage = buf[degree];
    Ok(())
}

fn fault(step: u64, node: usize, detail: String) -> Error {
    Error::NumericalFault { step, node, detail }
}
