//! Static kd-tree under the max norm.

pub(crate) struct KdTree<'a> {
    dim: usize,
    points: &'a [f64],
    index: Vec<usize>,
    nodes: Vec<Node>,
}

struct Node {
    start: usize,
    end: usize,
    /// `(axis, split value, left child, right child)` for inner nodes.
    split: Option<(usize, f64, usize, usize)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

const LEAF: usize = 16;

impl<'a> KdTree<'a> {
    /// `points` is row-major with `dim` columns.
    pub fn new(points: &'a [f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut tree = Self {
            dim,
            points,
            index: (0..n).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, n);
        tree
    }

    fn coord(&self, i: usize, a: usize) -> f64 {
        self.points[i * self.dim + a]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for &i in &self.index[start..end] {
            for a in 0..self.dim {
                let v = self.coord(i, a);
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            split: None,
            lo: lo.clone(),
            hi: hi.clone(),
        });
        if end - start <= LEAF {
            return id;
        }
        let axis = (0..self.dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[axis] <= lo[axis] {
            return id;
        }
        let mid = (start + end) / 2;
        let (points, dim) = (self.points, self.dim);
        self.index[start..end].select_nth_unstable_by(mid - start, |&x, &y| {
            points[x * dim + axis].total_cmp(&points[y * dim + axis])
        });
        let value = self.coord(self.index[mid], axis);
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id].split = Some((axis, value, left, right));
        id
    }

    fn box_distance(&self, node: &Node, q: &[f64]) -> f64 {
        let mut d: f64 = 0.0;
        for a in 0..self.dim {
            let v = q[a];
            let gap = if v < node.lo[a] {
                node.lo[a] - v
            } else if v > node.hi[a] {
                v - node.hi[a]
            } else {
                0.0
            };
            d = d.max(gap);
        }
        d
    }

    fn distance(&self, i: usize, q: &[f64]) -> f64 {
        let p = &self.points[i * self.dim..(i + 1) * self.dim];
        p.iter().zip(q).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Distance to the `k`-th nearest point other than `skip`.
    pub fn kth_distance(&self, q: &[f64], k: usize, skip: usize) -> f64 {
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        self.knn(0, q, k, skip, &mut best);
        best[k - 1]
    }

    fn knn(&self, id: usize, q: &[f64], k: usize, skip: usize, best: &mut Vec<f64>) {
        let node = &self.nodes[id];
        if best.len() == k && self.box_distance(node, q) > best[k - 1] {
            return;
        }
        match node.split {
            None => {
                for &i in &self.index[node.start..node.end] {
                    if i == skip {
                        continue;
                    }
                    let d = self.distance(i, q);
                    if best.len() < k || d < best[k - 1] {
                        let pos = best.partition_point(|&b| b <= d);
                        best.insert(pos, d);
                        best.truncate(k);
                    }
                }
            }
            Some((axis, value, left, right)) => {
                let (near, far) = if q[axis] < value { (left, right) } else { (right, left) };
                self.knn(near, q, k, skip, best);
                self.knn(far, q, k, skip, best);
            }
        }
    }

    /// Number of points at max-norm distance strictly below `r`, `skip` excluded.
    pub fn count_within(&self, q: &[f64], r: f64, skip: usize) -> usize {
        self.count(0, q, r, skip)
    }

    fn count(&self, id: usize, q: &[f64], r: f64, skip: usize) -> usize {
        let node = &self.nodes[id];
        if self.box_distance(node, q) >= r {
            return 0;
        }
        let inside = (0..self.dim).all(|a| q[a] - node.lo[a] < r && node.hi[a] - q[a] < r);
        if inside {
            let n = node.end - node.start;
            let has_skip = self.index[node.start..node.end].contains(&skip);
            return n - has_skip as usize;
        }
        match node.split {
            None => self.index[node.start..node.end]
                .iter()
                .filter(|&&i| i != skip && self.distance(i, q) < r)
                .count(),
            Some((_, _, left, right)) => self.count(left, q, r, skip) + self.count(right, q, r, skip),
        }
    }
}
