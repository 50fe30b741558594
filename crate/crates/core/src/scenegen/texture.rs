//! Stateless value-noise texture for the visible ground channel.

const OCTAVES: [(f64, f64); 3] = [(1.0, 0.5), (0.5, 0.3), (0.25, 0.2)];
const LOW: f64 = 0.25;
const SPAN: f64 = 0.4;

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, octave: u64, ix: i64, iy: i64) -> f64 {
    let h = mix(seed ^ mix(octave ^ mix((ix as u64) ^ mix(iy as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Ground albedo at world `(x, y)`, in `[0.25, 0.65]`.
pub fn ground_texture(seed: u64, x: f64, y: f64) -> f64 {
    let mut acc = 0.0;
    for (o, &(cell, amp)) in OCTAVES.iter().enumerate() {
        let (gx, gy) = (x / cell, y / cell);
        let (fx, fy) = (gx.floor(), gy.floor());
        let (tx, ty) = (smooth(gx - fx), smooth(gy - fy));
        let (ix, iy) = (fx as i64, fy as i64);
        let o = o as u64;
        let a = lattice(seed, o, ix, iy);
        let b = lattice(seed, o, ix + 1, iy);
        let c = lattice(seed, o, ix, iy + 1);
        let d = lattice(seed, o, ix + 1, iy + 1);
        let top = a + (b - a) * tx;
        let bottom = c + (d - c) * tx;
        acc += amp * (top + (bottom - top) * ty);
    }
    LOW + SPAN * acc
}
