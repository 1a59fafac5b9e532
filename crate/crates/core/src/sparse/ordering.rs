//! Fill-reducing symmetric ordering.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Minimum-degree ordering of a symmetric sparsity pattern given as column
/// pointers and row indices (either triangle or both; the pattern is
/// symmetrized internally).
///
/// Returns `perm` with `perm[k]` the original index eliminated at step `k`.
/// Ties are broken by the lowest original index so the result is
/// reproducible. Rows denser than `max(16, 10·√n)` are moved to the end in
/// index order, the usual treatment for coupling blocks such as fixed effects.
pub fn minimum_degree(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    let (adj, dense) = symmetric_adjacency(n, col_ptr, row_idx);
    let mut perm = md_order(adj, &dense);
    perm.extend((0..n).filter(|&v| dense[v]));
    perm
}

/// Symmetrized adjacency without self loops, with dense rows (more than
/// `max(16, 10·√n)` neighbours) flagged and removed from every list.
fn symmetric_adjacency(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> (Vec<Vec<usize>>, Vec<bool>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in 0..n {
        for &r in &row_idx[col_ptr[c]..col_ptr[c + 1]] {
            if r != c {
                adj[c].push(r);
                adj[r].push(c);
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let dense_cut = 16usize.max((10.0 * (n as f64).sqrt()) as usize);
    let dense: Vec<bool> = adj.iter().map(|a| a.len() > dense_cut).collect();
    if dense.iter().any(|&d| d) {
        for a in adj.iter_mut() {
            a.retain(|&u| !dense[u]);
        }
    }
    (adj, dense)
}

/// Exact minimum degree on an explicit elimination graph, skipping the
/// vertices flagged in `skip`. Adjacency lists must be sorted.
fn md_order(mut adj: Vec<Vec<usize>>, skip: &[bool]) -> Vec<usize> {
    let n = adj.len();
    let mut done = skip.to_vec();
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = BinaryHeap::with_capacity(n);
    for v in 0..n {
        if !done[v] {
            heap.push(Reverse((adj[v].len(), v)));
        }
    }

    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if done[v] || deg != adj[v].len() {
            continue;
        }
        done[v] = true;
        perm.push(v);
        let clique = std::mem::take(&mut adj[v]);
        for &u in &clique {
            merged.clear();
            let cur = &adj[u];
            let (mut i, mut j) = (0, 0);
            while i < cur.len() || j < clique.len() {
                let next = if j >= clique.len() || (i < cur.len() && cur[i] <= clique[j]) {
                    let x = cur[i];
                    if j < clique.len() && clique[j] == x {
                        j += 1;
                    }
                    i += 1;
                    x
                } else {
                    let x = clique[j];
                    j += 1;
                    x
                };
                if next != v && next != u {
                    merged.push(next);
                }
            }
            adj[u].clear();
            adj[u].extend_from_slice(&merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    perm
}

/// Subgraphs at most this large are ordered by minimum degree.
const ND_LEAF: usize = 120;

/// Nested dissection with level-structure separators: each connected piece
/// is split by the middle level of a breadth-first search from a
/// pseudo-peripheral vertex, both halves are ordered recursively and the
/// separator goes last. Small pieces fall back to minimum degree. Dense
/// rows (as in [`minimum_degree`]) are placed last.
pub fn nested_dissection(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    let (adj, dense) = symmetric_adjacency(n, col_ptr, row_idx);
    let mut nd = Dissection {
        adj: &adj,
        in_set: vec![false; n],
        level: vec![usize::MAX; n],
        local: vec![usize::MAX; n],
        perm: Vec::with_capacity(n),
    };
    let all: Vec<usize> = (0..n).filter(|&v| !dense[v]).collect();
    nd.split(all);
    let mut perm = nd.perm;
    perm.extend((0..n).filter(|&v| dense[v]));
    perm
}

struct Dissection<'a> {
    adj: &'a [Vec<usize>],
    in_set: Vec<bool>,
    level: Vec<usize>,
    local: Vec<usize>,
    perm: Vec<usize>,
}

impl Dissection<'_> {
    /// Breadth-first levels from `root` within the marked set; returns the
    /// visit order and the start offset of each level. Leaves `level` set
    /// for every visited vertex.
    fn bfs(&mut self, root: usize) -> (Vec<usize>, Vec<usize>) {
        let mut order = vec![root];
        let mut starts = vec![0];
        self.level[root] = 0;
        let mut lvl_start = 0;
        loop {
            let lvl_end = order.len();
            let d = starts.len();
            for i in lvl_start..lvl_end {
                let v = order[i];
                for &u in &self.adj[v] {
                    if self.in_set[u] && self.level[u] == usize::MAX {
                        self.level[u] = d;
                        order.push(u);
                    }
                }
            }
            if order.len() == lvl_end {
                break;
            }
            starts.push(lvl_end);
            lvl_start = lvl_end;
        }
        (order, starts)
    }

    fn clear_levels(&mut self, vs: &[usize]) {
        for &v in vs {
            self.level[v] = usize::MAX;
        }
    }

    fn set_marks(&mut self, vs: &[usize], on: bool) {
        for &v in vs {
            self.in_set[v] = on;
        }
    }

    /// Minimum degree on the subgraph induced by `set`.
    fn leaf(&mut self, set: &[usize]) {
        for (k, &v) in set.iter().enumerate() {
            self.local[v] = k;
        }
        let sub: Vec<Vec<usize>> = set
            .iter()
            .map(|&v| {
                let mut a: Vec<usize> = self.adj[v]
                    .iter()
                    .filter(|&&u| self.in_set[u])
                    .map(|&u| self.local[u])
                    .collect();
                a.sort_unstable();
                a
            })
            .collect();
        let order = md_order(sub, &vec![false; set.len()]);
        self.perm.extend(order.into_iter().map(|k| set[k]));
        for &v in set {
            self.local[v] = usize::MAX;
        }
    }

    fn split(&mut self, set: Vec<usize>) {
        self.set_marks(&set, true);
        let mut comps = Vec::new();
        for &v in &set {
            if self.level[v] == usize::MAX {
                let (order, _) = self.bfs(v);
                comps.push(order);
            }
        }
        for c in &comps {
            self.clear_levels(c);
        }
        self.set_marks(&set, false);
        for c in comps {
            self.dissect(c);
        }
    }

    /// Orders one connected `set`.
    fn dissect(&mut self, set: Vec<usize>) {
        self.set_marks(&set, true);
        if set.len() <= ND_LEAF {
            self.leaf(&set);
            self.set_marks(&set, false);
            return;
        }
        let mut root = set[0];
        let (mut order, mut starts) = self.bfs(root);
        loop {
            let last = &order[*starts.last().unwrap()..];
            let cand = *last.iter().min_by_key(|&&v| (self.adj[v].len(), v)).unwrap();
            self.clear_levels(&order);
            let (o2, s2) = self.bfs(cand);
            if s2.len() <= starts.len() {
                self.clear_levels(&o2);
                let (o3, s3) = self.bfs(root);
                order = o3;
                starts = s3;
                break;
            }
            root = cand;
            order = o2;
            starts = s2;
        }
        let depth = starts.len();
        if depth < 3 {
            self.clear_levels(&order);
            self.leaf(&set);
            self.set_marks(&set, false);
            return;
        }
        // middle level by vertex count, away from both ends
        let half = order.len() / 2;
        let k = starts.iter().rposition(|&s| s <= half).unwrap().clamp(1, depth - 2);
        let (sep_start, sep_end) = (starts[k], starts[k + 1]);
        // only separator vertices touching the next level are needed
        let mut a: Vec<usize> = order[..sep_start].to_vec();
        let mut sep = Vec::new();
        for &v in &order[sep_start..sep_end] {
            if self.adj[v].iter().any(|&u| self.in_set[u] && self.level[u] == k + 1) {
                sep.push(v);
            } else {
                a.push(v);
            }
        }
        let b: Vec<usize> = order[sep_end..].to_vec();
        self.clear_levels(&order);
        self.set_marks(&set, false);
        self.split(a);
        self.split(b);
        self.perm.extend(sep);
    }
}

/// Reverse Cuthill–McKee ordering of a symmetric pattern. Each connected
/// component starts from a pseudo-peripheral vertex; dense rows (as in
/// [`minimum_degree`]) are placed last.
pub fn reverse_cuthill_mckee(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    let (mut adj, dense) = symmetric_adjacency(n, col_ptr, row_idx);
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    for a in adj.iter_mut() {
        a.sort_by_key(|&u| (degree[u], u));
    }

    // breadth-first search from `root` over unvisited vertices; returns the
    // eccentricity of `root` and the start of the last level in `order`
    let bfs = |root: usize, visited: &[bool], order: &mut Vec<usize>, seen: &mut [bool]| -> (usize, usize) {
        order.clear();
        order.push(root);
        seen[root] = true;
        let (mut head, mut depth, mut level_start, mut level_end) = (0, 0, 0, 1);
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &u in &adj[v] {
                if !seen[u] && !visited[u] {
                    seen[u] = true;
                    order.push(u);
                }
            }
            if head == level_end && head < order.len() {
                depth += 1;
                level_start = level_end;
                level_end = order.len();
            }
        }
        for &v in order.iter() {
            seen[v] = false;
        }
        (depth, level_start)
    };

    let mut visited = dense.clone();
    let mut seen = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    let mut order = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        // pseudo-peripheral root
        let mut root = start;
        let (mut depth, mut last) = bfs(root, &visited, &mut order, &mut seen);
        loop {
            let cand = *order[last..].iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (d, l) = bfs(cand, &visited, &mut order, &mut seen);
            if d <= depth {
                bfs(root, &visited, &mut order, &mut seen);
                break;
            }
            root = cand;
            depth = d;
            last = l;
        }
        for &v in order.iter() {
            visited[v] = true;
        }
        perm.extend(order.iter().rev());
    }
    perm.extend((0..n).filter(|&v| dense[v]));
    perm
}

/// Inverse permutation: `inv[perm[k]] = k`.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}
