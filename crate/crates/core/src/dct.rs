//! Orthonormal 8×8 DCT-II and the JPEG zigzag scan.
//!
//! The basis is assembled from literal `cos(kπ/16)` constants rather than
//! calls into the platform libm so that encoders on different targets emit
//! identical coefficients.

pub const BLOCK: usize = 8;
pub const BLOCK_AREA: usize = BLOCK * BLOCK;

/// `cos(kπ/16)` for `k = 0..=8`.
const COS_16: [f64; 9] = [
    1.0,
    0.980_785_280_403_230_4,
    0.923_879_532_511_286_7,
    0.831_469_612_302_545_2,
    std::f64::consts::FRAC_1_SQRT_2,
    0.555_570_233_019_602_2,
    0.382_683_432_365_089_8,
    0.195_090_322_016_128_25,
    0.0,
];

/// `sqrt(1/8)`
const DC_SCALE: f64 = 0.353_553_390_593_273_8;

/// Raster index of the n-th coefficient in zigzag order.
pub const ZIGZAG: [usize; BLOCK_AREA] = [
    0, 1, 8, 16, 9, 2, 3, 10, //
    17, 24, 32, 25, 18, 11, 4, 5, //
    12, 19, 26, 33, 40, 48, 41, 34, //
    27, 20, 13, 6, 7, 14, 21, 28, //
    35, 42, 49, 56, 57, 50, 43, 36, //
    29, 22, 15, 23, 30, 37, 44, 51, //
    58, 59, 52, 45, 38, 31, 39, 46, //
    53, 60, 61, 54, 47, 55, 62, 63,
];

/// `cos(mπ/16)` for any integer `m`.
fn cos_pi_16(m: usize) -> f64 {
    match m % 32 {
        m @ 0..=8 => COS_16[m],
        m @ 9..=16 => -COS_16[16 - m],
        m @ 17..=24 => -COS_16[m - 16],
        m => COS_16[32 - m],
    }
}

/// Row `u` holds basis function `u` sampled at `x = 0..8`.
fn basis() -> [[f64; BLOCK]; BLOCK] {
    let mut b = [[0.0; BLOCK]; BLOCK];
    for (u, row) in b.iter_mut().enumerate() {
        let scale = if u == 0 { DC_SCALE } else { 0.5 };
        for (x, v) in row.iter_mut().enumerate() {
            *v = scale * cos_pi_16((2 * x + 1) * u);
        }
    }
    b
}

thread_local! {
    static BASIS: [[f64; BLOCK]; BLOCK] = basis();
}

/// Forward transform of a raster-ordered block.
pub fn fdct8x8(block: &[f64; BLOCK_AREA]) -> [f64; BLOCK_AREA] {
    BASIS.with(|c| {
        let mut tmp = [0.0; BLOCK_AREA];
        // rows: tmp[y][u] = Σx c[u][x]·block[y][x]
        for y in 0..BLOCK {
            for u in 0..BLOCK {
                tmp[y * BLOCK + u] = (0..BLOCK).map(|x| c[u][x] * block[y * BLOCK + x]).sum();
            }
        }
        let mut out = [0.0; BLOCK_AREA];
        // columns: out[v][u] = Σy c[v][y]·tmp[y][u]
        for v in 0..BLOCK {
            for u in 0..BLOCK {
                out[v * BLOCK + u] = (0..BLOCK).map(|y| c[v][y] * tmp[y * BLOCK + u]).sum();
            }
        }
        out
    })
}

/// Inverse of [`fdct8x8`].
pub fn idct8x8(coefs: &[f64; BLOCK_AREA]) -> [f64; BLOCK_AREA] {
    BASIS.with(|c| {
        let mut tmp = [0.0; BLOCK_AREA];
        for y in 0..BLOCK {
            for u in 0..BLOCK {
                tmp[y * BLOCK + u] = (0..BLOCK).map(|v| c[v][y] * coefs[v * BLOCK + u]).sum();
            }
        }
        let mut out = [0.0; BLOCK_AREA];
        for y in 0..BLOCK {
            for x in 0..BLOCK {
                out[y * BLOCK + x] = (0..BLOCK).map(|u| c[u][x] * tmp[y * BLOCK + u]).sum();
            }
        }
        out
    })
}
