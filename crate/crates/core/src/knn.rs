//! Static k-d tree for nearest-neighbour queries in condition and design space.

use std::collections::BinaryHeap;

use ordered::OrdF64;

#[derive(Clone, Debug)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    // Implicit balanced tree: `order[lo..hi]` is a subtree whose root is the
    // median element, split on axis `depth % D`.
    order: Vec<usize>,
}

impl<const D: usize> KdTree<D> {
    pub fn build(points: Vec<[f64; D]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build_rec(&points, &mut order, 0);
        Self { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; D] {
        self.points[i]
    }

    /// Indices of the `k` points nearest to `query`, closest first, skipping
    /// index `exclude`. Ties are broken by index.
    pub fn nearest(&self, query: [f64; D], k: usize, exclude: Option<usize>) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(query, k, exclude, 0, self.order.len(), 0, &mut heap);
        let mut found: Vec<(OrdF64, usize)> = heap.into_vec();
        found.sort();
        found.into_iter().map(|(_, i)| i).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        query: [f64; D],
        k: usize,
        exclude: Option<usize>,
        lo: usize,
        hi: usize,
        depth: usize,
        heap: &mut BinaryHeap<(OrdF64, usize)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = self.points[idx];
        if Some(idx) != exclude {
            let d2: f64 = p.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum();
            let entry = (OrdF64(d2), idx);
            if heap.len() < k {
                heap.push(entry);
            } else if entry < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(entry);
            }
        }
        let axis = depth % D;
        let diff = query[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(query, k, exclude, near.0, near.1, depth + 1, heap);
        let worst = heap.peek().map(|e| e.0 .0).unwrap_or(f64::INFINITY);
        if heap.len() < k || diff * diff <= worst {
            self.search(query, k, exclude, far.0, far.1, depth + 1, heap);
        }
    }
}

fn build_rec<const D: usize>(points: &[[f64; D]], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % D;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build_rec(points, left, depth + 1);
    build_rec(points, &mut right[1..], depth + 1);
}

mod ordered {
    use std::cmp::Ordering;

    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct OrdF64(pub f64);

    impl Eq for OrdF64 {}

    impl PartialOrd for OrdF64 {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for OrdF64 {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}
