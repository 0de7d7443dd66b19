//! Interpolation on cell-centred channel fields, in index coordinates.
//!
//! A point is given as `(fx, fy)` with cell centre `(i, j)` at `fx = i`,
//! `fy = j`. The x direction is periodic; in y the walls sit at
//! `fy = −½` and `fy = ny − ½`.

#[inline]
pub fn catmull_rom_weights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        0.5 * (-s3 + 2.0 * s2 - s),
        0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
        0.5 * (-3.0 * s3 + 4.0 * s2 + s),
        0.5 * (s3 - s2),
    ]
}

#[inline]
fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

/// Mirror index for cell-centred data with zero-flux walls.
#[inline]
fn mirror(j: i64, n: usize) -> usize {
    let n = n as i64;
    let j = if j < 0 { -j - 1 } else { j };
    let j = if j >= n { 2 * n - 1 - j } else { j };
    j.clamp(0, n - 1) as usize
}

/// Clamps a point into the closed domain; returns whether clamping happened.
#[inline]
pub fn clamp_y(fy: f64, ny: usize) -> (f64, bool) {
    let lo = -0.5;
    let hi = ny as f64 - 0.5;
    if fy < lo {
        (lo, true)
    } else if fy > hi {
        (hi, true)
    } else {
        (fy, false)
    }
}

/// Bicubic (Catmull-Rom) sample of several cell fields at once, plus the
/// indices of the 2×2 cells surrounding the point.
pub struct BicubicSample<const K: usize> {
    pub value: [f64; K],
    pub neighbours: [usize; 4],
}

pub fn bicubic<const K: usize>(fields: [&[f64]; K], nx: usize, ny: usize, fx: f64, fy: f64) -> BicubicSample<K> {
    let i0 = fx.floor();
    let j0 = fy.floor();
    let (sx, sy) = (fx - i0, fy - j0);
    let (i0, j0) = (i0 as i64, j0 as i64);
    let wx = catmull_rom_weights(sx);
    let wy = catmull_rom_weights(sy);
    let cols = [wrap(i0 - 1, nx), wrap(i0, nx), wrap(i0 + 1, nx), wrap(i0 + 2, nx)];
    let rows = [mirror(j0 - 1, ny), mirror(j0, ny), mirror(j0 + 1, ny), mirror(j0 + 2, ny)];
    let mut value = [0.0; K];
    for (k, f) in fields.iter().enumerate() {
        let mut acc = 0.0;
        for (b, &r) in rows.iter().enumerate() {
            let row = &f[r * nx..(r + 1) * nx];
            let line = wx[0] * row[cols[0]] + wx[1] * row[cols[1]] + wx[2] * row[cols[2]] + wx[3] * row[cols[3]];
            acc += wy[b] * line;
        }
        value[k] = acc;
    }
    let neighbours = [
        rows[1] * nx + cols[1],
        rows[1] * nx + cols[2],
        rows[2] * nx + cols[1],
        rows[2] * nx + cols[2],
    ];
    BicubicSample { value, neighbours }
}

/// Bilinear sample of a cell-centred field that takes the value `wall`
/// on both walls.
pub fn bilinear_with_walls(f: &[f64], nx: usize, ny: usize, fx: f64, fy: f64, wall: f64) -> f64 {
    let i0f = fx.floor();
    let sx = fx - i0f;
    let i0 = wrap(i0f as i64, nx);
    let i1 = wrap(i0f as i64 + 1, nx);
    let at_row = |j: usize| (1.0 - sx) * f[j * nx + i0] + sx * f[j * nx + i1];
    if fy <= 0.0 {
        let t = ((fy + 0.5) / 0.5).clamp(0.0, 1.0);
        return (1.0 - t) * wall + t * at_row(0);
    }
    let top = ny as f64 - 1.0;
    if fy >= top {
        let t = ((fy - top) / 0.5).clamp(0.0, 1.0);
        return (1.0 - t) * at_row(ny - 1) + t * wall;
    }
    let j0f = fy.floor();
    let sy = fy - j0f;
    let j0 = j0f as usize;
    (1.0 - sy) * at_row(j0) + sy * at_row(j0 + 1)
}
