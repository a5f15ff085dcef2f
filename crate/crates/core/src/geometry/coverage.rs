//! Sample coverage of 2D triangles on a pixel or texel grid.
//!
//! Samples sit at cell centers (`index + 0.5`). A sample exactly on an edge
//! belongs to the triangle for which that edge is a top or left edge, so two
//! triangles sharing an edge never both claim a sample on it. Edge functions
//! are evaluated with endpoints in a canonical order, which makes the sign
//! seen from the two sides of a shared edge exact negatives of each other.

/// One covered sample with barycentric weights for the triangle's original
/// vertex order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub x: u32,
    pub y: u32,
    pub bary: [f64; 3],
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (a, b, sign) = if (a[0], a[1]) <= (b[0], b[1]) {
        (a, b, 1.0)
    } else {
        (b, a, -1.0)
    };
    sign * ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]))
}

/// Top-left ownership for an edge direction on a y-down grid, for triangles
/// wound so that the interior has positive edge values.
#[inline]
fn owns(a: [f64; 2], b: [f64; 2]) -> bool {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

#[inline]
fn inside(w: f64, a: [f64; 2], b: [f64; 2]) -> bool {
    w > 0.0 || (w == 0.0 && owns(a, b))
}

/// Calls `f` for every cell center of a `width`×`height` grid covered by
/// `tri`, restricted to rows `rows.start..rows.end`. Degenerate triangles
/// cover nothing.
pub fn cover_triangle(
    tri: [[f64; 2]; 3],
    width: u32,
    height: u32,
    rows: std::ops::Range<u32>,
    mut f: impl FnMut(Coverage),
) {
    let [p0, p1, p2] = tri;
    if !tri.iter().flatten().all(|v| v.is_finite()) {
        return;
    }
    let area = edge(p0, p1, p2);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    // Wind so the interior is positive; remember where each vertex went.
    let (v, perm) = if area > 0.0 {
        ([p0, p1, p2], [0usize, 1, 2])
    } else {
        ([p0, p2, p1], [0usize, 2, 1])
    };
    let area = area.abs();

    let min_x = v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let max_x = v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = v.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_y = v.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);

    let x0 = (min_x - 0.5).floor().max(0.0);
    let x1 = (max_x - 0.5).ceil().min(width as f64 - 1.0);
    let y0 = (min_y - 0.5).floor().max(rows.start as f64);
    let y1 = (max_y - 0.5).ceil().min(rows.end as f64 - 1.0).min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let (x0, x1, y0, y1) = (x0 as u32, x1 as u32, y0 as u32, y1 as u32);

    for y in y0..=y1 {
        let py = y as f64 + 0.5;
        for x in x0..=x1 {
            let p = [x as f64 + 0.5, py];
            let w0 = edge(v[1], v[2], p);
            let w1 = edge(v[2], v[0], p);
            let w2 = edge(v[0], v[1], p);
            if inside(w0, v[1], v[2]) && inside(w1, v[2], v[0]) && inside(w2, v[0], v[1]) {
                let mut bary = [0.0; 3];
                bary[perm[0]] = w0 / area;
                bary[perm[1]] = w1 / area;
                bary[perm[2]] = w2 / area;
                f(Coverage { x, y, bary });
            }
        }
    }
}
