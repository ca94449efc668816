//! Masks as plain `Vec<u8>` / `Vec<u8>` overlays (0 neutral, 1 on, 2 off).

/// `p >= t` per pixel.
pub fn threshold(prob: &[f32], t: f64) -> Vec<u8> {
    prob.iter().map(|&p| (p as f64 >= t) as u8).collect()
}

/// One 3x3 dilation step, clipped at the borders.
pub fn dilate_once(m: &[u8], w: usize, h: usize) -> Vec<u8> {
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut on = false;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                        on |= m[ny as usize * w + nx as usize] != 0;
                    }
                }
            }
            out[y * w + x] = on as u8;
        }
    }
    out
}

pub fn dilate(m: &[u8], w: usize, h: usize, k: usize) -> Vec<u8> {
    let mut cur = m.to_vec();
    for _ in 0..k {
        cur = dilate_once(&cur, w, h);
    }
    cur
}

pub fn apply_overlay(m: &[u8], overlay: &[u8]) -> Vec<u8> {
    m.iter()
        .zip(overlay)
        .map(|(&v, &o)| match o {
            1 => 1,
            2 => 0,
            _ => v,
        })
        .collect()
}

/// One connected component found by flood fill.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Raster indices, ascending.
    pub pixels: Vec<usize>,
    /// `(x_min, y_min, x_max, y_max)`.
    pub bbox: (usize, usize, usize, usize),
    pub centroid: (f64, f64),
}

/// 8-connected components by recursive-style stack flood fill, in the
/// order their first pixel appears in raster scan.
pub fn flood_fill(m: &[u8], w: usize, h: usize) -> Vec<Component> {
    let mut visited = vec![false; w * h];
    let mut comps = Vec::new();
    for start in 0..w * h {
        if m[start] == 0 || visited[start] {
            continue;
        }
        let mut stack = vec![start];
        visited[start] = true;
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if m[j] != 0 && !visited[j] {
                        visited[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        let xs = pixels.iter().map(|&i| i % w);
        let ys = pixels.iter().map(|&i| i / w);
        let bbox = (
            xs.clone().min().unwrap(),
            ys.clone().min().unwrap(),
            xs.clone().max().unwrap(),
            ys.clone().max().unwrap(),
        );
        let n = pixels.len() as f64;
        let centroid = (
            xs.map(|x| x as f64).sum::<f64>() / n,
            ys.map(|y| y as f64).sum::<f64>() / n,
        );
        comps.push(Component {
            pixels,
            bbox,
            centroid,
        });
    }
    comps
}

/// Sorts components largest first, then by `(y_min, x_min)`, then by first
/// pixel.
pub fn rank(mut comps: Vec<Component>) -> Vec<Component> {
    comps.sort_by_key(|c| (std::cmp::Reverse(c.pixels.len()), c.bbox.1, c.bbox.0, c.pixels[0]));
    comps
}
