//! Flat ordering of all unknowns.
//!
//! Per edge in declaration order: the `ρ` grid then the `j` grid, each with
//! the space index inner and the time index outer. After the edges come the
//! vertex series: storage `(γ, f)` for interior vertices under generalized
//! coupling, then `(S, σ)` per source and `(D, d)` per sink in the
//! time-independent regime. `σ = -s` is stored so both slots of every pair
//! are nonnegative at a physical solution.

use thiserror::Error;

use super::grid::GridSpec;
use crate::graph::VertexKind;
use crate::problem::{BoundaryRegime, TransportProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    /// Interior storage `γ` with excess flux `f`.
    Storage,
    /// Remaining supply `S` with outflow rate `σ = -s`.
    Supply,
    /// Delivered demand `D` with rate `d`.
    Demand,
}

/// A vertex time-series pair in the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VertexSlot {
    pub vertex: usize,
    pub kind: SlotKind,
    pub mass: usize,
    pub flux: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeBlock {
    pub rho: usize,
    pub flux: usize,
    /// Spatial nodes.
    pub nodes: usize,
}

impl EdgeBlock {
    pub fn len(&self) -> usize {
        self.flux - self.rho
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub edges: Vec<EdgeBlock>,
    pub slots: Vec<VertexSlot>,
    pub time_nodes: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dimension mismatch: expected length {expected}, got {got}")]
pub struct DimensionMismatch {
    pub expected: usize,
    pub got: usize,
}

impl Layout {
    pub fn new(problem: &TransportProblem, grid: &GridSpec) -> Self {
        let nt = grid.time_nodes();
        let mut offset = 0;
        let mut edges = Vec::with_capacity(grid.edges.len());
        for eg in &grid.edges {
            let n = eg.nodes() * nt;
            edges.push(EdgeBlock {
                rho: offset,
                flux: offset + n,
                nodes: eg.nodes(),
            });
            offset += 2 * n;
        }

        let mut slots = Vec::new();
        let mut push = |vertex, kind, offset: &mut usize| {
            slots.push(VertexSlot {
                vertex,
                kind,
                mass: *offset,
                flux: *offset + nt,
            });
            *offset += 2 * nt;
        };
        for v in 0..problem.graph.vertex_count() {
            if problem.has_storage(v) {
                push(v, SlotKind::Storage, &mut offset);
            }
        }
        if problem.boundary == BoundaryRegime::TimeIndependent {
            for v in problem.graph.vertices_of_kind(VertexKind::Source) {
                push(v, SlotKind::Supply, &mut offset);
            }
            for v in problem.graph.vertices_of_kind(VertexKind::Sink) {
                push(v, SlotKind::Demand, &mut offset);
            }
        }

        Layout {
            edges,
            slots,
            time_nodes: nt,
            len: offset,
        }
    }

    /// A layout with no edge or vertex structure, just `len` unknowns.
    pub fn flat(len: usize) -> Self {
        Layout {
            edges: Vec::new(),
            slots: Vec::new(),
            time_nodes: 0,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of `ρ^e` at spatial node `i`, time node `k` (both 0-based).
    #[inline]
    pub fn rho(&self, e: usize, i: usize, k: usize) -> usize {
        let b = &self.edges[e];
        b.rho + k * b.nodes + i
    }

    #[inline]
    pub fn flux(&self, e: usize, i: usize, k: usize) -> usize {
        let b = &self.edges[e];
        b.flux + k * b.nodes + i
    }

    pub fn slot_for(&self, vertex: usize) -> Option<&VertexSlot> {
        self.slots.iter().find(|s| s.vertex == vertex)
    }

    /// Diagonal of the discrete inner product: `w_i^x w_k^t` on edge grids,
    /// `w_k^t` on vertex series.
    pub fn weights(&self, grid: &GridSpec) -> Vec<f64> {
        let mut w = vec![0.0; self.len];
        for (e, b) in self.edges.iter().enumerate() {
            let wx = &grid.edges[e].weights;
            for (k, wt) in grid.time_weights.iter().enumerate() {
                for (i, wxi) in wx.iter().enumerate() {
                    let idx = k * b.nodes + i;
                    w[b.rho + idx] = wxi * wt;
                    w[b.flux + idx] = wxi * wt;
                }
            }
        }
        for s in &self.slots {
            for (k, wt) in grid.time_weights.iter().enumerate() {
                w[s.mass + k] = *wt;
                w[s.flux + k] = *wt;
            }
        }
        w
    }

    pub fn unpack(&self, u: &PrimalVector) -> Result<GridFunctions, DimensionMismatch> {
        self.check(u.len())?;
        let u = u.as_slice();
        let edges = self
            .edges
            .iter()
            .map(|b| {
                let n = b.len();
                EdgeField {
                    rho: u[b.rho..b.rho + n].to_vec(),
                    flux: u[b.flux..b.flux + n].to_vec(),
                }
            })
            .collect();
        let nt = self.time_nodes;
        let slots = self
            .slots
            .iter()
            .map(|s| SlotSeries {
                mass: u[s.mass..s.mass + nt].to_vec(),
                flux: u[s.flux..s.flux + nt].to_vec(),
            })
            .collect();
        Ok(GridFunctions { edges, slots })
    }

    pub fn pack(&self, f: &GridFunctions) -> Result<PrimalVector, DimensionMismatch> {
        let mut u = vec![0.0; self.len];
        if f.edges.len() != self.edges.len() || f.slots.len() != self.slots.len() {
            return Err(DimensionMismatch {
                expected: self.edges.len() + self.slots.len(),
                got: f.edges.len() + f.slots.len(),
            });
        }
        for (b, ef) in self.edges.iter().zip(&f.edges) {
            let n = b.len();
            if ef.rho.len() != n || ef.flux.len() != n {
                return Err(DimensionMismatch {
                    expected: n,
                    got: ef.rho.len().min(ef.flux.len()),
                });
            }
            u[b.rho..b.rho + n].copy_from_slice(&ef.rho);
            u[b.flux..b.flux + n].copy_from_slice(&ef.flux);
        }
        let nt = self.time_nodes;
        for (s, sf) in self.slots.iter().zip(&f.slots) {
            if sf.mass.len() != nt || sf.flux.len() != nt {
                return Err(DimensionMismatch {
                    expected: nt,
                    got: sf.mass.len().min(sf.flux.len()),
                });
            }
            u[s.mass..s.mass + nt].copy_from_slice(&sf.mass);
            u[s.flux..s.flux + nt].copy_from_slice(&sf.flux);
        }
        Ok(PrimalVector(u))
    }

    pub fn check(&self, len: usize) -> Result<(), DimensionMismatch> {
        if len == self.len {
            Ok(())
        } else {
            Err(DimensionMismatch {
                expected: self.len,
                got: len,
            })
        }
    }
}

/// All unknowns as one flat vector in [`Layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalVector(pub Vec<f64>);

impl PrimalVector {
    pub fn zeros(layout: &Layout) -> Self {
        PrimalVector(vec![0.0; layout.len()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Grid values of one edge, `[k * nodes + i]` indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub rho: Vec<f64>,
    pub flux: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSeries {
    pub mass: Vec<f64>,
    pub flux: Vec<f64>,
}

/// Structured view of a [`PrimalVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunctions {
    pub edges: Vec<EdgeField>,
    pub slots: Vec<SlotSeries>,
}
