//! Stable seed derivation.
//!
//! Stages and per-sample rollouts get their own seeds hashed from the run seed, so
//! any stage can be re-run independently and results do not depend on scheduling order.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A component of a derived seed.
#[derive(Debug, Clone, Copy)]
pub enum SeedPart<'a> {
    Int(u64),
    Str(&'a str),
}

impl From<u64> for SeedPart<'_> {
    fn from(v: u64) -> Self {
        SeedPart::Int(v)
    }
}

impl From<usize> for SeedPart<'_> {
    fn from(v: usize) -> Self {
        SeedPart::Int(v as u64)
    }
}

impl<'a> From<&'a str> for SeedPart<'a> {
    fn from(v: &'a str) -> Self {
        SeedPart::Str(v)
    }
}

/// Hash `base` together with `parts` into a new 64-bit seed. Platform independent.
pub fn derive_seed(base: u64, parts: &[SeedPart<'_>]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    feed(&base.to_le_bytes());
    for part in parts {
        match part {
            SeedPart::Int(v) => {
                feed(&[0]);
                feed(&v.to_le_bytes());
            }
            SeedPart::Str(s) => {
                feed(&[1]);
                feed(&(s.len() as u64).to_le_bytes());
                feed(s.as_bytes());
            }
        }
    }
    splitmix64(h)
}
