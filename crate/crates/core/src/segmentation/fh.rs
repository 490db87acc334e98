//! Greedy graph-merging segmentation with a size-adaptive threshold.
//!
//! Pixels form an 8-connected grid graph with edge weights equal to the
//! Euclidean distance between (Gaussian-presmoothed) RGB values. Edges are
//! processed in order of non-decreasing weight; two components merge when the
//! joining edge weight does not exceed the smaller of the components'
//! internal difference plus `k / |C|`. A final pass merges components below
//! `min_size`.

use crate::error::{Error, Result};
use crate::raster::{gaussian_blur_plane, RgbRaster};
use crate::segmentation::SuperpixelSegmentation;

/// Precomputed weighted grid graph for one image. Building (and sorting) the
/// graph is independent of `k`, so count targeting can reuse it across probes.
pub struct FhGraph {
    width: u32,
    height: u32,
    /// Edges sorted by (weight, construction index).
    edges: Vec<Edge>,
}

struct Edge {
    weight: f64,
    a: u32,
    b: u32,
}

impl FhGraph {
    /// Build the 8-connected graph over `image`, presmoothing each RGB channel
    /// with a Gaussian of the given sigma.
    pub fn build(image: &RgbRaster, sigma: f64) -> Result<FhGraph> {
        if sigma < 0.0 {
            return Err(Error::invalid_input("sigma must be >= 0"));
        }
        let (w, h) = (image.width as usize, image.height as usize);

        let mut channels = [vec![], vec![], vec![]];
        for c in 0..3 {
            let plane: Vec<f64> = image.pixels.iter().map(|p| p[c]).collect();
            channels[c] = gaussian_blur_plane(&plane, w, h, sigma);
        }

        let weight = |a: usize, b: usize| -> f64 {
            let dr = channels[0][a] - channels[0][b];
            let dg = channels[1][a] - channels[1][b];
            let db = channels[2][a] - channels[2][b];
            (dr * dr + dg * dg + db * db).sqrt()
        };

        let mut edges = Vec::with_capacity(4 * w * h);
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if x + 1 < w {
                    edges.push(Edge { weight: weight(p, p + 1), a: p as u32, b: (p + 1) as u32 });
                }
                if y + 1 < h {
                    edges.push(Edge { weight: weight(p, p + w), a: p as u32, b: (p + w) as u32 });
                }
                if x + 1 < w && y + 1 < h {
                    edges.push(Edge {
                        weight: weight(p, p + w + 1),
                        a: p as u32,
                        b: (p + w + 1) as u32,
                    });
                }
                if x > 0 && y + 1 < h {
                    edges.push(Edge {
                        weight: weight(p, p + w - 1),
                        a: p as u32,
                        b: (p + w - 1) as u32,
                    });
                }
            }
        }
        // Ties broken by construction index; the stable sort keeps that order.
        edges.sort_by(|a, b| a.weight.partial_cmp(&b.weight).expect("finite weights"));

        Ok(FhGraph {
            width: image.width,
            height: image.height,
            edges,
        })
    }

    /// Run the merge process for one `(k, min_size)` setting.
    pub fn partition(&self, k: f64, min_size: u32) -> Result<SuperpixelSegmentation> {
        if k <= 0.0 {
            return Err(Error::invalid_input("k must be > 0"));
        }
        if min_size == 0 {
            return Err(Error::invalid_input("min_size must be >= 1"));
        }
        let n = self.width as usize * self.height as usize;
        let mut forest = Forest::new(n);

        for e in &self.edges {
            let ra = forest.find(e.a as usize);
            let rb = forest.find(e.b as usize);
            if ra == rb {
                continue;
            }
            let ta = forest.int_diff[ra] + k / forest.size[ra] as f64;
            let tb = forest.int_diff[rb] + k / forest.size[rb] as f64;
            if e.weight <= ta.min(tb) {
                let r = forest.union(ra, rb);
                forest.int_diff[r] = forest.int_diff[ra].max(forest.int_diff[rb]).max(e.weight);
            }
        }

        // Absorb undersized components along the same edge order.
        for e in &self.edges {
            let ra = forest.find(e.a as usize);
            let rb = forest.find(e.b as usize);
            if ra != rb && (forest.size[ra] < min_size || forest.size[rb] < min_size)
            {
                forest.union(ra, rb);
            }
        }

        let labels = forest.compact_labels();
        SuperpixelSegmentation::from_compacted(self.width, self.height, labels)
    }
}

struct Forest {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
    int_diff: Vec<f64>,
}

impl Forest {
    fn new(n: usize) -> Forest {
        Forest {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            int_diff: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    /// Union by rank; returns the surviving root.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (big, small) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        self.parent[small] = big as u32;
        if self.rank[a] == self.rank[b] {
            self.rank[big] += 1;
        }
        self.size[big] += self.size[small];
        big
    }

    /// Label roots by first appearance in pixel scan order.
    fn compact_labels(&mut self) -> Vec<u32> {
        let n = self.parent.len();
        let mut remap = vec![u32::MAX; n];
        let mut labels = vec![0u32; n];
        let mut next = 0u32;
        for i in 0..n {
            let r = self.find(i);
            if remap[r] == u32::MAX {
                remap[r] = next;
                next += 1;
            }
            labels[i] = remap[r];
        }
        labels
    }
}

/// Segment `image` with threshold scale `k`, minimum component size
/// `min_size` and presmoothing `sigma`.
pub fn fh_segment(
    image: &RgbRaster,
    k: f64,
    min_size: u32,
    sigma: f64,
) -> Result<SuperpixelSegmentation> {
    FhGraph::build(image, sigma)?.partition(k, min_size)
}
