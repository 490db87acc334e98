//! Localized k-means superpixels over combined CIELAB + position space.
//!
//! Cluster centers start on a regular grid (perturbed to the lowest-gradient
//! position in a 3x3 neighborhood), pixels are assigned within a 2S x 2S
//! search window around each center, and a connectivity pass absorbs orphan
//! fragments into their largest neighboring component.

use crate::error::{Error, Result};
use crate::raster::{rgb_to_lab, RgbRaster};
use crate::segmentation::SuperpixelSegmentation;

#[derive(Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// Segment `image` into roughly `n_target` compact superpixels.
pub fn slic_segment(
    image: &RgbRaster,
    n_target: u32,
    compactness: f64,
    max_iters: u32,
) -> Result<SuperpixelSegmentation> {
    let (w, h) = (image.width as usize, image.height as usize);
    let n_pixels = w * h;
    if n_target == 0 {
        return Err(Error::invalid_input("n_target must be >= 1"));
    }
    if n_target as usize > n_pixels {
        return Err(Error::invalid_input(format!(
            "n_target {} exceeds pixel count {}",
            n_target, n_pixels
        )));
    }
    if compactness <= 0.0 {
        return Err(Error::invalid_input("compactness must be > 0"));
    }

    let lab: Vec<[f64; 3]> = image.pixels.iter().map(|&p| rgb_to_lab(p)).collect();

    // Grid spacing and initial centers.
    let spacing = (n_pixels as f64 / n_target as f64).sqrt();
    let nx = (w as f64 / spacing).round().max(1.0) as usize;
    let ny = (h as f64 / spacing).round().max(1.0) as usize;
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = ((i as f64 + 0.5) * w as f64 / nx as f64 - 0.5).clamp(0.0, w as f64 - 1.0);
            let cy = ((j as f64 + 0.5) * h as f64 / ny as f64 - 0.5).clamp(0.0, h as f64 - 1.0);
            let (px, py) = lowest_gradient_nearby(&lab, w, h, cx.round() as usize, cy.round() as usize);
            centers.push(Center {
                lab: lab[py * w + px],
                x: px as f64,
                y: py as f64,
            });
        }
    }

    let search = (spacing.ceil() as i64).max(1);
    let m2_s2 = (compactness * compactness) / (spacing * spacing);
    let mut labels = vec![0u32; n_pixels];
    let mut best = vec![f64::INFINITY; n_pixels];

    for _ in 0..max_iters.max(1) {
        best.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x as i64 - search).max(0) as usize;
            let x1 = ((c.x as i64 + search) as usize + 1).min(w);
            let y0 = (c.y as i64 - search).max(0) as usize;
            let y1 = ((c.y as i64 + search) as usize + 1).min(h);
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = y * w + x;
                    let dl = lab[p][0] - c.lab[0];
                    let da = lab[p][1] - c.lab[1];
                    let db = lab[p][2] - c.lab[2];
                    let dx = x as f64 - c.x;
                    let dy = y as f64 - c.y;
                    let d = dl * dl + da * da + db * db + (dx * dx + dy * dy) * m2_s2;
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = ci as u32;
                    }
                }
            }
        }

        // Pixels outside every search window (possible on extreme aspect
        // ratios) go to the nearest center by full distance.
        for p in 0..n_pixels {
            if best[p].is_infinite() {
                let (x, y) = (p % w, p / w);
                let mut bd = f64::INFINITY;
                for (ci, c) in centers.iter().enumerate() {
                    let dx = x as f64 - c.x;
                    let dy = y as f64 - c.y;
                    let d = dx * dx + dy * dy;
                    if d < bd {
                        bd = d;
                        labels[p] = ci as u32;
                    }
                }
                best[p] = bd;
            }
        }

        // Update step: mean Lab and position per cluster.
        let mut acc = vec![[0.0f64; 5]; centers.len()];
        let mut cnt = vec![0u32; centers.len()];
        for p in 0..n_pixels {
            let ci = labels[p] as usize;
            let (x, y) = (p % w, p / w);
            acc[ci][0] += lab[p][0];
            acc[ci][1] += lab[p][1];
            acc[ci][2] += lab[p][2];
            acc[ci][3] += x as f64;
            acc[ci][4] += y as f64;
            cnt[ci] += 1;
        }
        for (ci, c) in centers.iter_mut().enumerate() {
            if cnt[ci] > 0 {
                let n = cnt[ci] as f64;
                c.lab = [acc[ci][0] / n, acc[ci][1] / n, acc[ci][2] / n];
                c.x = acc[ci][3] / n;
                c.y = acc[ci][4] / n;
            }
        }
    }

    enforce_connectivity(&mut labels, w, h);
    SuperpixelSegmentation::from_compacted(image.width, image.height, labels)
}

/// Move a seed to the lowest-gradient pixel in its 3x3 neighborhood
/// (squared L-channel gradient, 4-neighbor differences).
fn lowest_gradient_nearby(lab: &[[f64; 3]], w: usize, h: usize, cx: usize, cy: usize) -> (usize, usize) {
    let grad = |x: usize, y: usize| -> f64 {
        let xm = x.saturating_sub(1);
        let xp = (x + 1).min(w - 1);
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        let gx = lab[y * w + xp][0] - lab[y * w + xm][0];
        let gy = lab[yp * w + x][0] - lab[ym * w + x][0];
        gx * gx + gy * gy
    };
    let mut best = (cx, cy);
    let mut best_g = f64::INFINITY;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let x = cx as i64 + dx;
            let y = cy as i64 + dy;
            if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                continue;
            }
            let g = grad(x as usize, y as usize);
            if g < best_g {
                best_g = g;
                best = (x as usize, y as usize);
            }
        }
    }
    best
}

/// Split every label into 4-connected components; components that are not
/// their label's largest are orphans and get absorbed into the largest
/// adjacent component (ties toward the smaller component id).
fn enforce_connectivity(labels: &mut [u32], w: usize, h: usize) {
    let n = labels.len();
    let mut comp = vec![u32::MAX; n];
    let mut comp_size: Vec<u32> = Vec::new();
    let mut comp_label: Vec<u32> = Vec::new();
    let mut stack = Vec::new();

    for start in 0..n {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = comp_size.len() as u32;
        let label = labels[start];
        comp_label.push(label);
        let mut size = 0u32;
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == u32::MAX && labels[q] == label {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        comp_size.push(size);
    }

    let n_comp = comp_size.len();

    // Component adjacency.
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n_comp];
    let note = |a: u32, b: u32, neighbors: &mut Vec<Vec<u32>>| {
        if a != b {
            if !neighbors[a as usize].contains(&b) {
                neighbors[a as usize].push(b);
            }
            if !neighbors[b as usize].contains(&a) {
                neighbors[b as usize].push(a);
            }
        }
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                note(comp[p], comp[p + 1], &mut neighbors);
            }
            if y + 1 < h {
                note(comp[p], comp[p + w], &mut neighbors);
            }
        }
    }

    // Largest component per label is the anchor and keeps the label.
    let mut anchor_of_label: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    for id in 0..n_comp as u32 {
        let l = comp_label[id as usize];
        match anchor_of_label.get(&l) {
            Some(&a) if comp_size[a as usize] >= comp_size[id as usize] => {}
            _ => {
                anchor_of_label.insert(l, id);
            }
        }
    }

    // Absorb orphans, smallest first, following merges with union-find.
    let mut parent: Vec<u32> = (0..n_comp as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            let g = parent[parent[x as usize] as usize];
            parent[x as usize] = g;
            x = g;
        }
        x
    }
    let mut order: Vec<u32> = (0..n_comp as u32)
        .filter(|&id| anchor_of_label[&comp_label[id as usize]] != id)
        .collect();
    order.sort_by_key(|&id| (comp_size[id as usize], id));
    let mut size_now = comp_size.clone();
    for id in order {
        let root = find(&mut parent, id);
        if root != id {
            continue; // already absorbed transitively
        }
        let mut target: Option<u32> = None;
        for &nb in &neighbors[id as usize] {
            let nr = find(&mut parent, nb);
            if nr == id {
                continue;
            }
            let better = match target {
                None => true,
                Some(t) => {
                    size_now[nr as usize] > size_now[t as usize]
                        || (size_now[nr as usize] == size_now[t as usize] && nr < t)
                }
            };
            if better {
                target = Some(nr);
            }
        }
        if let Some(t) = target {
            parent[id as usize] = t;
            size_now[t as usize] += size_now[id as usize];
        }
    }

    // Rewrite pixel labels from surviving component roots. Compaction to
    // [0, count) happens in the caller.
    let mut new_label = vec![u32::MAX; n_comp];
    let mut next = 0u32;
    for p in 0..n {
        let root = find(&mut parent, comp[p]);
        if new_label[root as usize] == u32::MAX {
            new_label[root as usize] = next;
            next += 1;
        }
        labels[p] = new_label[root as usize];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_image_four_cells() {
        let img = RgbRaster::filled(16, 16, [0.4, 0.4, 0.4]).unwrap();
        let seg = slic_segment(&img, 4, 10.0, 10).unwrap();
        assert_eq!(seg.count, 4);
        let mut areas = vec![0u32; 4];
        for &l in &seg.labels {
            areas[l as usize] += 1;
        }
        for &a in &areas {
            assert_eq!(a, 64, "expected near-equal quadrants, got {areas:?}");
        }
        // quadrant corners carry distinct labels
        let corners = [
            seg.label_at(0, 0),
            seg.label_at(15, 0),
            seg.label_at(0, 15),
            seg.label_at(15, 15),
        ];
        let mut sorted = corners.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
    }

    #[test]
    fn single_target_single_superpixel() {
        let img = RgbRaster::filled(9, 7, [0.2, 0.8, 0.1]).unwrap();
        let seg = slic_segment(&img, 1, 10.0, 10).unwrap();
        assert_eq!(seg.count, 1);
    }

    #[test]
    fn two_tone_purity() {
        let mut img = RgbRaster::new(32, 32).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let v = if x < 16 { 0.1 } else { 0.9 };
                img.set(x, y, [v, v, v]);
            }
        }
        let seg = slic_segment(&img, 8, 10.0, 10).unwrap();
        for id in 0..seg.count {
            let mut dark = 0;
            let mut bright = 0;
            for y in 0..32 {
                for x in 0..32 {
                    if seg.label_at(x, y) == id {
                        if x < 16 {
                            dark += 1;
                        } else {
                            bright += 1;
                        }
                    }
                }
            }
            assert!(
                dark == 0 || bright == 0,
                "superpixel {id} straddles the tone boundary ({dark}/{bright})"
            );
        }
    }

    #[test]
    fn rejects_target_above_pixel_count() {
        let img = RgbRaster::filled(4, 4, [0.5; 3]).unwrap();
        assert!(slic_segment(&img, 17, 10.0, 5).is_err());
    }

    #[test]
    fn connectivity_after_enforcement() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut img = RgbRaster::new(24, 24).unwrap();
        for p in img.pixels.iter_mut() {
            *p = [rng.random(), rng.random(), rng.random()];
        }
        let seg = slic_segment(&img, 30, 10.0, 10).unwrap();
        seg.validate().unwrap();
    }
}
