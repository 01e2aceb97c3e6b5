//! Seeded random streams built on SplitMix64.
//!
//! Every stochastic draw in the pipeline comes from a stream derived from
//! a master seed plus the identity of the item being processed, never from
//! a shared generator. That makes results independent of batch composition,
//! worker count and scheduling.

/// SplitMix64 finalizer: one mix of the advanced state.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 generator (Steele, Lea & Flood 2014).
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi). Returns `lo` when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Unbiased uniform integer in [0, n). Panics if n == 0.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is undefined");
        // Rejection zone m of size 2^64 mod n; values below it would bias.
        let zone = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= zone {
                return x % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// First `n` elements of a Fisher-Yates pass over 0..len: a uniform
    /// sample of n indices without replacement, in draw order.
    pub fn sample_indices(&mut self, len: usize, n: usize) -> Vec<usize> {
        assert!(n <= len, "cannot sample {n} from {len}");
        let mut idx: Vec<usize> = (0..len).collect();
        for i in 0..n {
            let j = i + self.below((len - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(n);
        idx
    }
}

/// FNV-1a 64-bit hash; stable across platforms.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Augmentation stages, in application order. The discriminant doubles as
/// the stage id inside item keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StageId {
    Elastic = 0,
    BrightnessContrast = 1,
    Blur = 2,
    Noise = 3,
    Resample = 4,
}

impl StageId {
    pub const ALL: [StageId; 5] = [
        StageId::Elastic,
        StageId::BrightnessContrast,
        StageId::Blur,
        StageId::Noise,
        StageId::Resample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageId::Elastic => "elastic",
            StageId::BrightnessContrast => "brightness_contrast",
            StageId::Blur => "blur",
            StageId::Noise => "noise",
            StageId::Resample => "resample",
        }
    }
}

/// Identity of one stochastic draw site: which item, which epoch, which
/// stage. Identical keys always yield identical streams.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemKey<'a> {
    pub image_id: &'a str,
    pub grid_index: u32,
    pub epoch: u32,
    pub stage: StageId,
}

impl ItemKey<'_> {
    /// Stable 64-bit hash of the key. Fields are length-prefixed so that
    /// distinct keys cannot collide by concatenation.
    fn hash(&self) -> u64 {
        let mut buf = Vec::with_capacity(self.image_id.len() + 32);
        buf.extend_from_slice(&(self.image_id.len() as u64).to_le_bytes());
        buf.extend_from_slice(self.image_id.as_bytes());
        buf.extend_from_slice(&u64::from(self.grid_index).to_le_bytes());
        buf.extend_from_slice(&u64::from(self.epoch).to_le_bytes());
        buf.push(self.stage as u8);
        fnv1a64(&buf)
    }
}

/// Per-item stream: SplitMix64 seeded with master_seed XOR hash(item key).
pub fn stream_for_item(master_seed: u64, key: &ItemKey) -> SplitMix64 {
    SplitMix64::new(master_seed ^ key.hash())
}

/// Stream for a named non-item purpose (epoch shuffling, dataset splits,
/// parameter init). `index` distinguishes repeats of the same purpose.
pub fn stream_for_purpose(master_seed: u64, purpose: &str, index: u64) -> SplitMix64 {
    let mut buf = Vec::with_capacity(purpose.len() + 16);
    buf.extend_from_slice(&(purpose.len() as u64).to_le_bytes());
    buf.extend_from_slice(purpose.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    SplitMix64::new(master_seed ^ fnv1a64(&buf))
}
