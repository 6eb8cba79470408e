//! Matroid catalog: uniform, partition and graphic matroids with their rank functions.

use crate::error::{Error, Result};
use crate::sets::ProjectSet;

#[derive(Debug, Clone, PartialEq)]
pub enum MatroidKind {
    Uniform {
        rank: usize,
    },
    Partition {
        blocks: Vec<Vec<usize>>,
        caps: Vec<usize>,
    },
    /// Element `j` of the ground set is edge `edges[j]` of a multigraph.
    /// Vertex ids are arbitrary labels; loops are allowed and have rank 0.
    Graphic {
        edges: Vec<(usize, usize)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matroid {
    ground: usize,
    kind: MatroidKind,
    // partition: block index of each element; graphic: compressed endpoints
    block_of: Vec<usize>,
    endpoints: Vec<(usize, usize)>,
    vertices: usize,
}

impl Matroid {
    pub fn uniform(ground: usize, rank: usize) -> Result<Self> {
        if rank > ground {
            return Err(Error::input(format!(
                "uniform matroid rank {rank} exceeds ground size {ground}"
            )));
        }
        Ok(Matroid {
            ground,
            kind: MatroidKind::Uniform { rank },
            block_of: Vec::new(),
            endpoints: Vec::new(),
            vertices: 0,
        })
    }

    /// `blocks` must partition `0..ground`; `caps[b]` bounds how many elements of block `b` count.
    pub fn partition(ground: usize, blocks: Vec<Vec<usize>>, caps: Vec<usize>) -> Result<Self> {
        if blocks.len() != caps.len() {
            return Err(Error::input(format!(
                "partition matroid has {} blocks but {} caps",
                blocks.len(),
                caps.len()
            )));
        }
        let mut block_of = vec![usize::MAX; ground];
        for (b, block) in blocks.iter().enumerate() {
            for &j in block {
                if j >= ground {
                    return Err(Error::input(format!(
                        "partition block {} names project {} but there are {ground} projects",
                        b + 1,
                        j + 1
                    )));
                }
                if block_of[j] != usize::MAX {
                    return Err(Error::input(format!(
                        "project {} appears in more than one partition block",
                        j + 1
                    )));
                }
                block_of[j] = b;
            }
        }
        if let Some(j) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::input(format!(
                "partition blocks do not cover project {}",
                j + 1
            )));
        }
        Ok(Matroid {
            ground,
            kind: MatroidKind::Partition { blocks, caps },
            block_of,
            endpoints: Vec::new(),
            vertices: 0,
        })
    }

    /// Graphic matroid whose ground set is the edge list, in order.
    pub fn graphic(edges: Vec<(usize, usize)>) -> Self {
        let mut labels: Vec<usize> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
        labels.sort_unstable();
        labels.dedup();
        let index = |v: usize| labels.binary_search(&v).expect("label collected above");
        let endpoints = edges.iter().map(|&(u, v)| (index(u), index(v))).collect();
        Matroid {
            ground: edges.len(),
            vertices: labels.len(),
            kind: MatroidKind::Graphic { edges },
            block_of: Vec::new(),
            endpoints,
        }
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn kind(&self) -> &MatroidKind {
        &self.kind
    }

    pub fn rank(&self, set: &ProjectSet) -> Result<usize> {
        set.check(self.ground)?;
        Ok(self.rank_of(set.indices()))
    }

    /// Rank of a duplicate-free list of in-range elements.
    pub(crate) fn rank_of(&self, elements: &[usize]) -> usize {
        match &self.kind {
            MatroidKind::Uniform { rank } => elements.len().min(*rank),
            MatroidKind::Partition { caps, .. } => {
                let mut used = vec![0usize; caps.len()];
                let mut rank = 0;
                for &j in elements {
                    let b = self.block_of[j];
                    if used[b] < caps[b] {
                        used[b] += 1;
                        rank += 1;
                    }
                }
                rank
            }
            MatroidKind::Graphic { .. } => {
                // size of a spanning forest of the chosen edges
                let mut forest = DisjointSets::new(self.vertices);
                elements
                    .iter()
                    .filter(|&&j| {
                        let (u, v) = self.endpoints[j];
                        forest.union(u, v)
                    })
                    .count()
            }
        }
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ix: &[usize]) -> ProjectSet {
        ProjectSet::new(ix.iter().copied())
    }

    /// Largest independent subset by brute force over forests: a subset of
    /// edges is independent iff it has no cycle, i.e. |edges| == |vertices touched| - components.
    fn brute_graphic_rank(edges: &[(usize, usize)], s: &[usize]) -> usize {
        let mut best = 0;
        for mask in 0u32..(1 << s.len()) {
            let chosen: Vec<(usize, usize)> = s
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &j)| edges[j])
                .collect();
            let mut ds = DisjointSets::new(16);
            if chosen.iter().all(|&(u, v)| ds.union(u, v)) {
                best = best.max(chosen.len());
            }
        }
        best
    }

    #[test]
    fn uniform_rank_is_capped() {
        let u = Matroid::uniform(3, 2).unwrap();
        assert_eq!(u.rank(&set(&[0, 1, 2])).unwrap(), 2);
        assert_eq!(u.rank(&set(&[1])).unwrap(), 1);
        assert_eq!(u.rank(&ProjectSet::empty()).unwrap(), 0);
        assert!(Matroid::uniform(2, 3).is_err());
    }

    #[test]
    fn triangle_has_rank_two() {
        let g = Matroid::graphic(vec![(1, 2), (2, 3), (3, 1)]);
        assert_eq!(g.rank(&set(&[0, 1, 2])).unwrap(), 2);
        assert_eq!(brute_graphic_rank(&[(1, 2), (2, 3), (3, 1)], &[0, 1, 2]), 2);
    }

    #[test]
    fn graphic_matches_brute_force_on_a_multigraph() {
        let edges = vec![(0, 1), (0, 1), (1, 2), (2, 2), (2, 3), (3, 0), (1, 3)];
        let g = Matroid::graphic(edges.clone());
        for mask in 0u64..(1 << edges.len()) {
            let s = ProjectSet::from_mask(mask);
            assert_eq!(
                g.rank(&s).unwrap(),
                brute_graphic_rank(&edges, s.indices()),
                "set {s}"
            );
        }
    }

    #[test]
    fn partition_rank_sums_capped_blocks() {
        let p = Matroid::partition(5, vec![vec![0, 1, 2], vec![3, 4]], vec![2, 0]).unwrap();
        assert_eq!(p.rank(&set(&[0, 1, 2, 3])).unwrap(), 2);
        assert_eq!(p.rank(&set(&[3, 4])).unwrap(), 0);
    }

    #[test]
    fn partition_must_cover_exactly_once() {
        assert!(Matroid::partition(3, vec![vec![0, 1]], vec![1]).is_err());
        assert!(Matroid::partition(3, vec![vec![0, 1], vec![1, 2]], vec![1, 1]).is_err());
        assert!(Matroid::partition(2, vec![vec![0, 5]], vec![1]).is_err());
        assert!(Matroid::partition(2, vec![vec![0, 1]], vec![1, 1]).is_err());
    }

    #[test]
    fn out_of_range_set_is_rejected() {
        let u = Matroid::uniform(3, 1).unwrap();
        assert!(matches!(u.rank(&set(&[3])), Err(Error::Input(_))));
    }
}
