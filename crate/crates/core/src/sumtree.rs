//! Complete binary tree of nonnegative weights with logarithmic update and
//! proportional sampling. Internal nodes are recomputed from their children on
//! every update, so round-off never accumulates.

#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(n: usize) -> Self {
        let leaves = n.max(1).next_power_of_two();
        SumTree { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    pub fn len(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    pub fn clear(&mut self) {
        self.nodes.fill(0.0);
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, w: f64) {
        debug_assert!(w >= 0.0 && w.is_finite());
        let mut k = self.leaves + i;
        self.nodes[k] = w;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Overwrite all leaves and rebuild in linear time.
    pub fn rebuild(&mut self, weights: impl IntoIterator<Item = f64>) {
        self.nodes.fill(0.0);
        for (i, w) in weights.into_iter().enumerate() {
            self.nodes[self.leaves + i] = w;
        }
        for k in (1..self.leaves).rev() {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf `i` such that the prefix sum before `i` is at most `u` and the
    /// prefix through `i` exceeds it. `u` is expected in `[0, total)`; a leaf
    /// with positive weight is always returned when the total is positive.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if (u < left || right <= 0.0) && left > 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}
