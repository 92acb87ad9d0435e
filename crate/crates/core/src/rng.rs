//! Reproducible random streams.
//!
//! Every simulated path owns a [`PathRng`] derived from `(master_seed,
//! path_index)`. It wraps two ChaCha8 streams keyed by the same per-path seed:
//! one drives the point process (candidate times and acceptance draws), the
//! other the Brownian increments. ChaCha is counter based, so the draw
//! sequence of a path depends only on its key and never on which worker
//! generated it or in what order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const EVENT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Mixes a master seed and a path index into a per-path seed
/// (SplitMix64 finaliser applied twice).
pub fn path_seed(master_seed: u64, path_index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ path_index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The pair of random streams owned by one path.
#[derive(Debug, Clone)]
pub struct PathRng {
    seed: u64,
    pub events: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl PathRng {
    pub fn from_seed(seed: u64) -> Self {
        let mut events = ChaCha8Rng::seed_from_u64(seed);
        events.set_stream(EVENT_STREAM);
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        noise.set_stream(NOISE_STREAM);
        Self { seed, events, noise }
    }

    pub fn for_path(master_seed: u64, path_index: u64) -> Self {
        Self::from_seed(path_seed(master_seed, path_index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
#[inline]
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Exponential waiting time with the given rate.
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -libm::log(open_uniform(rng)) / rate
}

/// Standard normal variate by inversion of the uniform stream.
#[inline]
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    inverse_normal_cdf(open_uniform(rng))
}

/// Quantile function of the standard normal law (Wichura's AS241,
/// relative accuracy about 1e-16). `p` must lie in (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_6,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_4e3,
        1.373_169_376_550_946_1e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_545e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_545,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_8,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_8e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_049e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = libm::sqrt(-libm::log(tail));
    let x = if r <= 5.0 {
        horner(&C, r - 1.6) / horner(&D, r - 1.6)
    } else {
        horner(&E, r - 5.0) / horner(&F, r - 5.0)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Evaluates `sum_k c[k] r^k`.
#[inline]
fn horner(c: &[f64; 8], r: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * r + k)
}
