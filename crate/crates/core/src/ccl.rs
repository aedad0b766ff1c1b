//! 8-connected component labeling via scanline union-find.
//!
//! Shared by patch extraction and ground-truth segment analysis so both
//! sides of the toolkit agree on what a "segment" is.

/// Union-find over pixel indices with path compression.
struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Lower root wins so labels stay stable in scan order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Label 8-connected components of equal `key` values. `key(i)` returns
/// `None` for background pixels, which receive no label. Component labels
/// are compacted to 0..n in order of first appearance.
pub fn label_components<K: PartialEq>(
    width: usize,
    height: usize,
    key: impl Fn(usize) -> Option<K>,
) -> Vec<Option<u32>> {
    let n = width * height;
    let mut uf = UnionFind::new(n);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let Some(k) = key(i) else { continue };
            // Prior neighbors in scan order: W, NW, N, NE.
            let mut try_union = |nx: isize, ny: isize| {
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    return;
                }
                let j = ny as usize * width + nx as usize;
                if key(j).as_ref() == Some(&k) {
                    uf.union(i as u32, j as u32);
                }
            };
            let (xi, yi) = (x as isize, y as isize);
            try_union(xi - 1, yi);
            try_union(xi - 1, yi - 1);
            try_union(xi, yi - 1);
            try_union(xi + 1, yi - 1);
        }
    }

    let mut labels = vec![None; n];
    let mut next = 0u32;
    let mut compact: Vec<Option<u32>> = vec![None; n];
    for i in 0..n {
        if key(i).is_none() {
            continue;
        }
        let root = uf.find(i as u32) as usize;
        let label = *compact[root].get_or_insert_with(|| {
            let l = next;
            next += 1;
            l
        });
        labels[i] = Some(label);
    }
    labels
}
