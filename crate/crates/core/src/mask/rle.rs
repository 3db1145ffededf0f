use serde::{Deserialize, Serialize};

use super::{check_dims, check_same_shape, BinaryMask, MaskError, Result};

/// Row-major, background-first run-length mask.
///
/// `counts[0]` is the leading background run (possibly 0), then runs
/// alternate foreground/background. Serialized as
/// `{"size":[H,W],"counts":[c0,c1,...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RleJson {
    size: [u32; 2],
    counts: Vec<u64>,
}

impl TryFrom<RleJson> for RleMask {
    type Error = MaskError;

    fn try_from(j: RleJson) -> Result<Self> {
        RleMask::new(j.size[0], j.size[1], j.counts)
    }
}

impl From<RleMask> for RleJson {
    fn from(r: RleMask) -> Self {
        RleJson {
            size: [r.height, r.width],
            counts: r.counts,
        }
    }
}

impl RleMask {
    /// Validates the counts against the run-length invariants.
    pub fn new(height: u32, width: u32, counts: Vec<u64>) -> Result<Self> {
        let n = check_dims(height, width)? as u64;
        if let Some(index) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(MaskError::RleZeroRun { index: index + 1 });
        }
        let mut sum = 0u64;
        for &c in &counts {
            sum = sum.checked_add(c).ok_or(MaskError::RleSum {
                expected: n,
                got: u64::MAX,
            })?;
        }
        if sum != n {
            return Err(MaskError::RleSum { expected: n, got: sum });
        }
        Ok(Self { height, width, counts })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn shape(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for bit in mask.bits() {
        if bit != current {
            counts.push(run);
            run = 0;
            current = bit;
        }
        run += 1;
    }
    counts.push(run);
    RleMask {
        height: mask.height(),
        width: mask.width(),
        counts,
    }
}

pub fn rle_decode(rle: &RleMask) -> BinaryMask {
    // RleMask can only be built through `new`, so counts already sum to H*W.
    let mut mask = BinaryMask::zeros(rle.height, rle.width).expect("validated dims");
    let mut pos = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        let end = pos + c as usize;
        if i % 2 == 1 {
            for idx in pos..end {
                mask.words[idx / 64] |= 1 << (idx % 64);
            }
        }
        pos = end;
    }
    mask
}

/// Foreground pixel count straight from the runs.
pub fn rle_area(rle: &RleMask) -> u64 {
    rle.counts.iter().skip(1).step_by(2).sum()
}

/// IoU computed by merging the two run lists without decoding.
pub fn rle_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    check_same_shape(a.shape(), b.shape())?;
    let mut ia = RunCursor::new(&a.counts);
    let mut ib = RunCursor::new(&b.counts);
    let mut inter = 0u64;
    let mut union = 0u64;
    while let (Some((va, la)), Some((vb, lb))) = (ia.peek(), ib.peek()) {
        let step = la.min(lb);
        if va && vb {
            inter += step;
        }
        if va || vb {
            union += step;
        }
        ia.advance(step);
        ib.advance(step);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

struct RunCursor<'a> {
    counts: &'a [u64],
    index: usize,
    remaining: u64,
}

impl<'a> RunCursor<'a> {
    fn new(counts: &'a [u64]) -> Self {
        let mut c = Self {
            counts,
            index: 0,
            remaining: counts.first().copied().unwrap_or(0),
        };
        c.skip_empty();
        c
    }

    fn skip_empty(&mut self) {
        while self.remaining == 0 && self.index < self.counts.len() {
            self.index += 1;
            self.remaining = self.counts.get(self.index).copied().unwrap_or(0);
        }
    }

    fn peek(&self) -> Option<(bool, u64)> {
        (self.index < self.counts.len()).then_some((self.index % 2 == 1, self.remaining))
    }

    fn advance(&mut self, n: u64) {
        self.remaining -= n;
        self.skip_empty();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_known_layouts() {
        let m = BinaryMask::from_u8(2, 2, &[1, 1, 0, 0]).unwrap();
        assert_eq!(rle_encode(&m).counts(), &[0, 2, 2]);
        let z = BinaryMask::zeros(3, 3).unwrap();
        assert_eq!(rle_encode(&z).counts(), &[9]);
        let full = BinaryMask::from_u8(1, 3, &[1, 1, 1]).unwrap();
        assert_eq!(rle_encode(&full).counts(), &[0, 3]);
    }

    #[test]
    fn decode_rejects_bad_counts() {
        assert!(matches!(RleMask::new(2, 2, vec![1, 2]), Err(MaskError::RleSum { .. })));
        assert!(matches!(RleMask::new(2, 2, vec![1, 0, 3]), Err(MaskError::RleZeroRun { index: 1 })));
        assert!(RleMask::new(2, 2, vec![0, 4]).is_ok());
        assert!(RleMask::new(2, 2, vec![u64::MAX, 5]).is_err());
    }

    #[test]
    fn json_form_is_bit_exact() {
        let m = BinaryMask::from_u8(2, 3, &[0, 1, 1, 0, 0, 1]).unwrap();
        let s = serde_json::to_string(&rle_encode(&m)).unwrap();
        assert_eq!(s, r#"{"size":[2,3],"counts":[1,2,2,1]}"#);
        let back: RleMask = serde_json::from_str(&s).unwrap();
        assert_eq!(rle_decode(&back), m);
        assert!(serde_json::from_str::<RleMask>(r#"{"size":[2,3],"counts":[1,2]}"#).is_err());
    }

    #[test]
    fn area_matches_popcount() {
        let m = BinaryMask::from_fn(7, 11, |r, c| (r * 3 + c) % 4 == 0).unwrap();
        assert_eq!(rle_area(&rle_encode(&m)), m.area());
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1u32..=16, 1u32..=16).prop_flat_map(|(h, w)| {
            proptest::collection::vec(any::<bool>(), (h * w) as usize)
                .prop_map(move |bits| BinaryMask::from_bits(h, w, &bits).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn roundtrip_is_identity(m in arb_mask()) {
            let rle = rle_encode(&m);
            prop_assert!(RleMask::new(rle.height(), rle.width(), rle.counts().to_vec()).is_ok());
            prop_assert_eq!(rle_decode(&rle), m);
        }
    }
}
