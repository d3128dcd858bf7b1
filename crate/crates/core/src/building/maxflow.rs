//! Boykov-Kolmogorov max-flow on f64 capacities.
//!
//! Nodes left in the source tree at termination form the source side of the
//! minimum cut.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tree {
    Free,
    Source,
    Sink,
}

#[derive(Debug, Clone)]
struct Arc {
    head: u32,
    next: u32,
    cap: f64,
}

#[derive(Debug, Clone)]
pub struct Graph {
    first: Vec<u32>,
    arcs: Vec<Arc>,
    /// Positive: residual from the source; negative: residual to the sink.
    tr_cap: Vec<f64>,
    flow: f64,
    tree: Vec<Tree>,
    parent: Vec<u32>,
}

#[inline]
fn sister(a: u32) -> u32 {
    a ^ 1
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Self {
            first: vec![NONE; n],
            arcs: Vec::new(),
            tr_cap: vec![0.0; n],
            flow: 0.0,
            tree: vec![Tree::Free; n],
            parent: vec![NONE; n],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.first.len()
    }

    /// Source capacity `s` and sink capacity `t` for node i.
    pub fn add_terminal(&mut self, i: usize, s: f64, t: f64) {
        let m = s.min(t);
        self.flow += m;
        self.tr_cap[i] += s - t;
    }

    /// Directed capacities i→j and j→i.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        let a = self.arcs.len() as u32;
        self.arcs.push(Arc {
            head: j as u32,
            next: self.first[i],
            cap,
        });
        self.first[i] = a;
        self.arcs.push(Arc {
            head: i as u32,
            next: self.first[j],
            cap: rev_cap,
        });
        self.first[j] = a + 1;
    }

    fn arcs_of(&self, i: usize) -> impl Iterator<Item = u32> + '_ {
        let mut a = self.first[i];
        std::iter::from_fn(move || {
            if a == NONE {
                None
            } else {
                let cur = a;
                a = self.arcs[a as usize].next;
                Some(cur)
            }
        })
    }

    /// Residual capacity p→q for arc a leaving p, in the direction its tree grows.
    #[inline]
    fn tree_residual(&self, tree: Tree, a: u32) -> f64 {
        match tree {
            Tree::Source => self.arcs[a as usize].cap,
            _ => self.arcs[sister(a) as usize].cap,
        }
    }

    /// Whether q's parent chain reaches a terminal.
    fn rooted(&self, mut q: usize) -> bool {
        loop {
            match self.parent[q] {
                TERMINAL => return true,
                NONE => return false,
                a => q = self.arcs[a as usize].head as usize,
            }
        }
    }

    /// Run to completion and return the max-flow value.
    pub fn maxflow(&mut self) -> f64 {
        let n = self.num_nodes();
        let mut active: VecDeque<usize> = VecDeque::new();
        let mut is_active = vec![false; n];
        for i in 0..n {
            if self.tr_cap[i] > 0.0 {
                self.tree[i] = Tree::Source;
                self.parent[i] = TERMINAL;
            } else if self.tr_cap[i] < 0.0 {
                self.tree[i] = Tree::Sink;
                self.parent[i] = TERMINAL;
            } else {
                continue;
            }
            active.push_back(i);
            is_active[i] = true;
        }
        let mut orphans: VecDeque<usize> = VecDeque::new();
        let mut current: Option<usize> = None;
        loop {
            let p = match current.take() {
                Some(p) => p,
                None => match active.pop_front() {
                    Some(p) => {
                        is_active[p] = false;
                        p
                    }
                    None => break,
                },
            };
            let tp = self.tree[p];
            if tp == Tree::Free {
                continue;
            }
            // Grow.
            let mut middle = None;
            let arcs: Vec<u32> = self.arcs_of(p).collect();
            for a in arcs {
                if self.tree_residual(tp, a) <= 0.0 {
                    continue;
                }
                let q = self.arcs[a as usize].head as usize;
                match self.tree[q] {
                    Tree::Free => {
                        self.tree[q] = tp;
                        self.parent[q] = sister(a);
                        if !is_active[q] {
                            is_active[q] = true;
                            active.push_back(q);
                        }
                    }
                    tq if tq != tp => {
                        middle = Some(if tp == Tree::Source { a } else { sister(a) });
                        break;
                    }
                    _ => {}
                }
            }
            let Some(mid) = middle else {
                continue;
            };
            self.augment(mid, &mut orphans);
            self.adopt(&mut orphans, &mut active, &mut is_active);
            if self.tree[p] != Tree::Free {
                current = Some(p);
            }
        }
        self.flow
    }

    /// Push the bottleneck along source-tree → `mid` → sink-tree.
    fn augment(&mut self, mid: u32, orphans: &mut VecDeque<usize>) {
        let u = self.arcs[sister(mid) as usize].head as usize;
        let v = self.arcs[mid as usize].head as usize;
        let mut b = self.arcs[mid as usize].cap;
        let mut x = u;
        while self.parent[x] != TERMINAL {
            let pa = self.parent[x];
            b = b.min(self.arcs[sister(pa) as usize].cap);
            x = self.arcs[pa as usize].head as usize;
        }
        b = b.min(self.tr_cap[x]);
        let mut x = v;
        while self.parent[x] != TERMINAL {
            let pa = self.parent[x];
            b = b.min(self.arcs[pa as usize].cap);
            x = self.arcs[pa as usize].head as usize;
        }
        b = b.min(-self.tr_cap[x]);

        self.arcs[mid as usize].cap -= b;
        self.arcs[sister(mid) as usize].cap += b;
        let mut x = u;
        while self.parent[x] != TERMINAL {
            let pa = self.parent[x];
            self.arcs[pa as usize].cap += b;
            self.arcs[sister(pa) as usize].cap -= b;
            let next = self.arcs[pa as usize].head as usize;
            if self.arcs[sister(pa) as usize].cap <= 0.0 {
                self.parent[x] = NONE;
                orphans.push_back(x);
            }
            x = next;
        }
        self.tr_cap[x] -= b;
        if self.tr_cap[x] <= 0.0 {
            self.parent[x] = NONE;
            orphans.push_back(x);
        }
        let mut x = v;
        while self.parent[x] != TERMINAL {
            let pa = self.parent[x];
            self.arcs[pa as usize].cap -= b;
            self.arcs[sister(pa) as usize].cap += b;
            let next = self.arcs[pa as usize].head as usize;
            if self.arcs[pa as usize].cap <= 0.0 {
                self.parent[x] = NONE;
                orphans.push_back(x);
            }
            x = next;
        }
        self.tr_cap[x] += b;
        if self.tr_cap[x] >= 0.0 {
            self.parent[x] = NONE;
            orphans.push_back(x);
        }
        self.flow += b;
    }

    fn adopt(&mut self, orphans: &mut VecDeque<usize>, active: &mut VecDeque<usize>, is_active: &mut [bool]) {
        while let Some(p) = orphans.pop_front() {
            let tp = self.tree[p];
            let has_terminal = match tp {
                Tree::Source => self.tr_cap[p] > 0.0,
                Tree::Sink => self.tr_cap[p] < 0.0,
                Tree::Free => continue,
            };
            if has_terminal {
                self.parent[p] = TERMINAL;
                continue;
            }
            let arcs: Vec<u32> = self.arcs_of(p).collect();
            let mut found = None;
            for &a in &arcs {
                let q = self.arcs[a as usize].head as usize;
                // Residual q→p for the source tree, p→q for the sink tree.
                let res = match tp {
                    Tree::Source => self.arcs[sister(a) as usize].cap,
                    _ => self.arcs[a as usize].cap,
                };
                if self.tree[q] == tp && res > 0.0 && self.rooted(q) {
                    found = Some(a);
                    break;
                }
            }
            if let Some(a) = found {
                self.parent[p] = a;
                continue;
            }
            for &a in &arcs {
                let q = self.arcs[a as usize].head as usize;
                if self.tree[q] != tp {
                    continue;
                }
                let res = match tp {
                    Tree::Source => self.arcs[sister(a) as usize].cap,
                    _ => self.arcs[a as usize].cap,
                };
                if res > 0.0 && !is_active[q] {
                    is_active[q] = true;
                    active.push_back(q);
                }
                let pq = self.parent[q];
                if pq != TERMINAL && pq != NONE && self.arcs[pq as usize].head as usize == p {
                    self.parent[q] = NONE;
                    orphans.push_back(q);
                }
            }
            self.tree[p] = Tree::Free;
        }
    }

    /// After `maxflow`: whether node i is on the source side.
    pub fn is_source_side(&self, i: usize) -> bool {
        self.tree[i] == Tree::Source
    }
}
