//! Memory allocation, augmented vertices `(v, m)` and the augmented edge set.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::mdp::{Mdp, VertexKind};

pub type MemoryId = u32;

/// Assignment of a nonempty set of memory states to every vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryAllocation {
    size: usize,
    alloc: Vec<Vec<MemoryId>>,
}

impl MemoryAllocation {
    /// Every vertex gets all `size` memory states.
    pub fn full(num_vertices: usize, size: usize) -> Self {
        let all: Vec<MemoryId> = (0..size as MemoryId).collect();
        MemoryAllocation {
            size,
            alloc: vec![all; num_vertices],
        }
    }

    /// Explicit allocation; memory ids are sorted and deduplicated.
    pub fn new(size: usize, alloc: Vec<Vec<MemoryId>>) -> Self {
        let alloc = alloc
            .into_iter()
            .map(|mut a| {
                a.sort_unstable();
                a.dedup();
                a
            })
            .collect();
        MemoryAllocation { size, alloc }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn of(&self, v: usize) -> &[MemoryId] {
        &self.alloc[v]
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        if self.alloc.len() != mdp.len() {
            return Err(Error::Dimension(format!(
                "allocation covers {} vertices, MDP has {}",
                self.alloc.len(),
                mdp.len()
            )));
        }
        for (v, a) in self.alloc.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::EmptyAllocation(mdp.name(v).to_string()));
            }
            if let Some(&m) = a.iter().find(|&&m| m as usize >= self.size) {
                return Err(Error::InvalidStrategy(format!(
                    "memory state {m} at `{}` exceeds memory size {}",
                    mdp.name(v),
                    self.size
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AugVertex {
    pub vertex: usize,
    pub mem: MemoryId,
}

/// A softmax group: a contiguous range of augmented edges normalized together.
/// For stochastic vertices the group's probabilities are scaled by `p(v)(v')`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxGroup {
    pub edges: Range<usize>,
    pub scale: f64,
}

/// The augmented vertex and edge sets of an MDP under a memory allocation.
///
/// Ordering is lexicographic: vertices by `(vertex, memory)`, edges by source
/// augmented vertex, then successor vertex, then successor memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Augmented {
    alloc: MemoryAllocation,
    vertices: Vec<AugVertex>,
    offsets: Vec<usize>,
    edges: Vec<(usize, usize)>,
    out: Vec<Range<usize>>,
    groups: Vec<SoftmaxGroup>,
}

impl Augmented {
    pub fn build(mdp: &Mdp, alloc: &MemoryAllocation) -> Result<Augmented> {
        alloc.validate(mdp)?;
        let mut vertices = Vec::new();
        let mut offsets = Vec::with_capacity(mdp.len() + 1);
        for v in 0..mdp.len() {
            offsets.push(vertices.len());
            vertices.extend(alloc.of(v).iter().map(|&mem| AugVertex { vertex: v, mem }));
        }
        offsets.push(vertices.len());

        let mut edges = Vec::new();
        let mut out = Vec::with_capacity(vertices.len());
        let mut groups = Vec::new();
        for (src, av) in vertices.iter().enumerate() {
            let start = edges.len();
            let v = av.vertex;
            for (j, &u) in mdp.successors(v).iter().enumerate() {
                let gstart = edges.len();
                edges.extend((offsets[u]..offsets[u + 1]).map(|dst| (src, dst)));
                if mdp.kind(v) == VertexKind::Stochastic {
                    groups.push(SoftmaxGroup {
                        edges: gstart..edges.len(),
                        scale: mdp.probabilities(v).expect("stochastic")[j],
                    });
                }
            }
            if mdp.kind(v) == VertexKind::Nondeterministic {
                groups.push(SoftmaxGroup {
                    edges: start..edges.len(),
                    scale: 1.0,
                });
            }
            out.push(start..edges.len());
        }
        Ok(Augmented {
            alloc: alloc.clone(),
            vertices,
            offsets,
            edges,
            out,
            groups,
        })
    }

    pub fn allocation(&self) -> &MemoryAllocation {
        &self.alloc
    }

    pub fn vertices(&self) -> &[AugVertex] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Range of edge indices leaving augmented vertex `i`.
    pub fn out_edges(&self, i: usize) -> Range<usize> {
        self.out[i].clone()
    }

    pub fn groups(&self) -> &[SoftmaxGroup] {
        &self.groups
    }

    /// Index of `(vertex, mem)` if `mem` is allocated to `vertex`.
    pub fn index_of(&self, vertex: usize, mem: MemoryId) -> Option<usize> {
        let lo = *self.offsets.get(vertex)?;
        let hi = self.offsets[vertex + 1];
        self.vertices[lo..hi]
            .binary_search_by_key(&mem, |a| a.mem)
            .ok()
            .map(|p| lo + p)
    }

    /// Index of the augmented edge `src -> dst`, if present.
    pub fn edge_index(&self, src: usize, dst: usize) -> Option<usize> {
        let r = self.out.get(src)?.clone();
        self.edges[r.clone()]
            .binary_search_by_key(&dst, |e| e.1)
            .ok()
            .map(|p| r.start + p)
    }
}

/// Builds the augmented vertex list, edge list and softmax grouping.
pub fn build_augmented(mdp: &Mdp, alloc: &MemoryAllocation) -> Result<Augmented> {
    Augmented::build(mdp, alloc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;

    fn example1() -> Mdp {
        let mut b = MdpBuilder::new(2);
        b.vertex("A", VertexKind::Nondeterministic, &[1, 0])
            .vertex("B", VertexKind::Nondeterministic, &[0, 8])
            .edge("A", "A")
            .edge("A", "B")
            .edge("B", "A")
            .edge("B", "B");
        b.build().unwrap()
    }

    #[test]
    fn memoryless_mirrors_graph() {
        let m = example1();
        let aug = build_augmented(&m, &MemoryAllocation::full(2, 1)).unwrap();
        assert_eq!(aug.num_vertices(), 2);
        assert_eq!(aug.num_edges(), 4);
        assert_eq!(aug.groups().len(), 2);
    }

    #[test]
    fn two_memories() {
        let m = example1();
        let aug = build_augmented(&m, &MemoryAllocation::full(2, 2)).unwrap();
        assert_eq!(aug.num_vertices(), 4);
        assert_eq!(aug.num_edges(), 16);
        // ((A,0) -> (A,0)), ((A,0) -> (A,1)), ((A,0) -> (B,0)), ...
        assert_eq!(&aug.edges()[..4], &[(0, 0), (0, 1), (0, 2), (0, 3)]);
        for g in aug.groups() {
            assert_eq!(g.edges.len(), 4);
        }
        assert_eq!(aug.index_of(1, 1), Some(3));
        assert_eq!(aug.edge_index(3, 1), Some(13));
    }

    #[test]
    fn stochastic_group_scaled() {
        let mut b = MdpBuilder::new(1);
        b.vertex("v", VertexKind::Stochastic, &[0])
            .vertex("u", VertexKind::Nondeterministic, &[0])
            .prob_edge("v", "u", 1.0)
            .edge("u", "v");
        let m = b.build().unwrap();
        let alloc = MemoryAllocation::new(2, vec![vec![0], vec![0, 1]]);
        let aug = build_augmented(&m, &alloc).unwrap();
        let g: Vec<_> = aug
            .groups()
            .iter()
            .filter(|g| aug.edges()[g.edges.start].0 == 0)
            .collect();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].edges.len(), 2);
        assert_eq!(g[0].scale, 1.0);
    }

    #[test]
    fn empty_allocation_rejected() {
        let m = example1();
        let alloc = MemoryAllocation::new(1, vec![vec![0], vec![]]);
        assert!(matches!(
            build_augmented(&m, &alloc),
            Err(Error::EmptyAllocation(v)) if v == "B"
        ));
    }

    #[test]
    fn every_edge_in_exactly_one_group() {
        let m = example1();
        let aug = build_augmented(&m, &MemoryAllocation::full(2, 3)).unwrap();
        let mut count = vec![0; aug.num_edges()];
        for g in aug.groups() {
            for e in g.edges.clone() {
                count[e] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 1));
    }
}
