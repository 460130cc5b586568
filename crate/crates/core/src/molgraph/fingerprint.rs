use super::MolGraph;

pub const DEFAULT_WIDTH: usize = 2048;
pub const DEFAULT_RADIUS: usize = 2;

const HASH_SEED: u64 = 0x5EED_C0DE_2020_0BE7;

/// SplitMix64 finalizer folded over an accumulator. Pinned so fingerprints
/// are bit-identical on every platform.
fn mix(acc: u64, value: u64) -> u64 {
    let mut z = acc ^ value.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(acc << 6).wrapping_add(acc >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixed-width bit vector of hashed atom environments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    radius: usize,
}

impl Fingerprint {
    pub fn new(width: usize, radius: usize) -> Fingerprint {
        assert!(width.is_power_of_two(), "fingerprint width must be a power of two");
        Fingerprint {
            words: vec![0; width.div_ceil(64)],
            width,
            radius,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn set(&mut self, bit: usize) {
        let bit = bit % self.width;
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn is_set(&self, bit: usize) -> bool {
        bit < self.width && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.is_set(b))
    }

    pub fn tanimoto(&self, other: &Fingerprint) -> f64 {
        let (mut inter, mut union) = (0u32, 0u32);
        for (a, b) in self.words.iter().zip(&other.words) {
            inter += (a & b).count_ones();
            union += (a | b).count_ones();
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Hashed circular fingerprint. Each atom starts from (element, heavy degree,
/// charge, aromatic flag); every shell folds in the sorted (bond order,
/// neighbor identifier) list. One bit is set per atom per shell, at
/// `identifier mod width`.
///
/// ```
/// use chemberta_core::molgraph::{morgan_fingerprint, parse_smiles};
/// let a = morgan_fingerprint(&parse_smiles("OCC").unwrap(), 2, 2048);
/// let b = morgan_fingerprint(&parse_smiles("CCO").unwrap(), 2, 2048);
/// assert_eq!(a, b);
/// ```
pub fn morgan_fingerprint(g: &MolGraph, radius: usize, width: usize) -> Fingerprint {
    let mut fp = Fingerprint::new(width, radius);
    let mut ids: Vec<u64> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut h = mix(HASH_SEED, a.element.atomic_number() as u64);
            h = mix(h, g.degree(i) as u64);
            h = mix(h, a.charge as i64 as u64);
            mix(h, a.aromatic as u64)
        })
        .collect();
    for &id in &ids {
        fp.set((id % width as u64) as usize);
    }
    for shell in 1..=radius {
        let next: Vec<u64> = (0..g.atom_count())
            .map(|i| {
                let mut env: Vec<(u8, u64)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(nb, b)| (g.bonds()[b].order.code(), ids[nb]))
                    .collect();
                env.sort_unstable();
                let mut h = mix(HASH_SEED ^ shell as u64, ids[i]);
                for (code, nid) in env {
                    h = mix(mix(h, code as u64), nid);
                }
                h
            })
            .collect();
        ids = next;
        for &id in &ids {
            fp.set((id % width as u64) as usize);
        }
    }
    fp
}
