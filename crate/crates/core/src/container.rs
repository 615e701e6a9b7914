//! `USBF1` binary container.
//!
//! All integers are little-endian. Layout:
//!
//! ```text
//! magic       5 bytes  "USBF1"
//! version     u16      1
//! header      kv-block
//! records     u32 count, then per record:
//!               kv-block
//!               u32 array count, then per array:
//!                 u32 name length, UTF-8 name
//!                 u8 ndim, ndim x u32 dims
//!                 product(dims) x f32 data, row-major
//! kv-block    u32 entry count, then per entry:
//!               u32 key length, UTF-8 key, u32 value length, UTF-8 value
//! ```
//!
//! Metadata maps are sorted by key, so equal containers encode to equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};

use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"USBF1";
pub const VERSION: u16 = 1;

pub type Metadata = BTreeMap<String, String>;

/// An n-dimensional `f32` array with a name.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    name: String,
    data: ArrayD<f32>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, data: ArrayD<f32>) -> Result<Self> {
        let name = name.into();
        if data.ndim() > u8::MAX as usize {
            return Err(Error::invalid("array", format!("{name} has too many dimensions")));
        }
        if data.shape().iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::invalid("array", format!("{name} has a dimension above u32::MAX")));
        }
        Ok(Self { name, data })
    }

    /// Narrow a 2-D `f64` image to `f32`.
    pub fn from_f64(name: impl Into<String>, values: &Array2<f64>) -> Result<Self> {
        Self::new(name, values.mapv(|v| v as f32).into_dyn())
    }

    /// `true` maps to 1, `false` to 0.
    pub fn from_mask(name: impl Into<String>, mask: &Array2<bool>) -> Result<Self> {
        Self::new(name, mask.mapv(|m| if m { 1.0 } else { 0.0 }).into_dyn())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn data(&self) -> &ArrayD<f32> {
        &self.data
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    /// Widen a 2-D array back to `f64`.
    pub fn to_f64_2d(&self) -> Result<Array2<f64>> {
        self.data
            .view()
            .into_dimensionality()
            .map(|a| a.mapv(f64::from))
            .map_err(|_| Error::Shape(format!("{} is {}-D, expected 2-D", self.name, self.data.ndim())))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Record {
    pub metadata: Metadata,
    pub arrays: Vec<NamedArray>,
}

impl Record {
    pub fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Like [`Record::array`], with a format error naming the missing array.
    pub fn require(&self, name: &str) -> Result<&NamedArray> {
        self.array(name).ok_or_else(|| Error::Config(format!("record has no array named {name:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub header: Metadata,
    pub records: Vec<Record>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid("container", format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_metadata(out: &mut Vec<u8>, meta: &Metadata) -> Result<()> {
    put_u32(out, meta.len())?;
    for (k, v) in meta {
        put_str(out, k)?;
        put_str(out, v)?;
    }
    Ok(())
}

impl Container {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_metadata(&mut out, &self.header)?;
        put_u32(&mut out, self.records.len())?;
        for record in &self.records {
            put_metadata(&mut out, &record.metadata)?;
            put_u32(&mut out, record.arrays.len())?;
            for array in &record.arrays {
                put_str(&mut out, &array.name)?;
                out.push(array.data.ndim() as u8);
                for &d in array.data.shape() {
                    put_u32(&mut out, d)?;
                }
                out.reserve(array.data.len() * 4);
                for &v in array.data.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(MAGIC.len(), "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                reason: format!(
                    "bad magic {:?}, expected \"USBF1\"",
                    String::from_utf8_lossy(magic)
                ),
            });
        }
        let version_at = r.pos;
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
        if version != VERSION {
            return Err(Error::Format {
                offset: version_at as u64,
                reason: format!("unsupported format version {version}, this reader handles {VERSION}"),
            });
        }
        let header = r.metadata()?;
        let count = r.u32("record count")?;
        let mut records = Vec::new();
        for _ in 0..count {
            let metadata = r.metadata()?;
            let n_arrays = r.u32("array count")?;
            let mut arrays = Vec::new();
            for _ in 0..n_arrays {
                arrays.push(r.array()?);
            }
            records.push(Record { metadata, arrays });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                reason: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Self { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.bytes.len() as u64,
                reason: format!(
                    "truncated while reading {what}: {n} bytes needed at offset {}, {} available",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)?;
        let at = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            offset: at as u64,
            reason: format!("{what} is not valid UTF-8"),
        })
    }

    fn metadata(&mut self) -> Result<Metadata> {
        let n = self.u32("metadata entry count")?;
        let mut meta = Metadata::new();
        for _ in 0..n {
            let at = self.pos;
            let k = self.string("metadata key")?;
            let v = self.string("metadata value")?;
            if meta.insert(k.clone(), v).is_some() {
                return Err(Error::Format {
                    offset: at as u64,
                    reason: format!("duplicate metadata key {k:?}"),
                });
            }
        }
        Ok(meta)
    }

    fn array(&mut self) -> Result<NamedArray> {
        let name = self.string("array name")?;
        let ndim = self.take(1, "array rank")?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u32("array dimension")?);
        }
        let at = self.pos;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4).map(|_| n))
            .ok_or(Error::Format {
                offset: at as u64,
                reason: format!("array {name:?} size overflows"),
            })?;
        let raw = self.take(count * 4, "array data")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let data = ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| Error::Format {
            offset: at as u64,
            reason: e.to_string(),
        })?;
        Ok(NamedArray { name, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut header = Metadata::new();
        header.insert("kind".into(), "dataset".into());
        header.insert("note".into(), "ünïcode ok".into());
        let mut meta = Metadata::new();
        meta.insert("seed".into(), "7".into());
        let rf = ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1.0, -2.5, f32::MIN_POSITIVE, 0.0, -0.0, 3e38]).unwrap();
        Container {
            header,
            records: vec![Record {
                metadata: meta,
                arrays: vec![
                    NamedArray::new("rf", rf).unwrap(),
                    NamedArray::new("scalar", ArrayD::from_elem(IxDyn(&[]), 4.0)).unwrap(),
                ],
            }],
        }
    }

    #[test]
    fn encodes_documented_layout() {
        let bytes = sample().encode().unwrap();
        assert_eq!(&bytes[..5], b"USBF1");
        assert_eq!(&bytes[5..7], &[1, 0]);
        assert_eq!(&bytes[7..11], &2u32.to_le_bytes());
        // first key is "kind" (sorted)
        assert_eq!(&bytes[11..15], &4u32.to_le_bytes());
        assert_eq!(&bytes[15..19], b"kind");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.encode().unwrap();
        let back = Container::decode(&bytes).unwrap();
        assert_eq!(back, c);
        let neg_zero = back.records[0].arrays[0].data()[[1, 1]];
        assert!(neg_zero.is_sign_negative());
        assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut bytes = sample().encode().unwrap();
        bytes[0] = b'X';
        let err = Container::decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("USBF1"), "{err}");

        let mut bytes = sample().encode().unwrap();
        bytes[5] = 2;
        match Container::decode(&bytes) {
            Err(Error::Format { offset, reason }) => {
                assert_eq!(offset, 5);
                assert!(reason.contains("version 2"));
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().encode().unwrap();
        for cut in [3, 6, 20, bytes.len() - 1] {
            match Container::decode(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert_eq!(offset, cut as u64),
                other => panic!("cut {cut}: expected format error, got {other:?}"),
            }
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Container::decode(&extra), Err(Error::Format { .. })));
    }

    #[test]
    fn huge_declared_array_does_not_allocate() {
        let mut c = Container::default();
        c.records.push(Record {
            metadata: Metadata::new(),
            arrays: vec![NamedArray::new("a", ArrayD::zeros(IxDyn(&[1]))).unwrap()],
        });
        let mut bytes = c.encode().unwrap();
        // rank byte sits right after the 1-byte name; overwrite the dim
        let dim_at = bytes.len() - 8;
        bytes[dim_at..dim_at + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(Container::decode(&bytes), Err(Error::Format { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn array() -> impl Strategy<Value = NamedArray> {
            ("[a-z_]{1,8}", proptest::collection::vec(1usize..5, 0..4)).prop_flat_map(|(name, shape)| {
                let n = shape.iter().product::<usize>();
                proptest::collection::vec(any::<u32>(), n).prop_map(move |bits| {
                    let data = bits.into_iter().map(f32::from_bits).collect();
                    NamedArray::new(name.clone(), ArrayD::from_shape_vec(IxDyn(&shape), data).unwrap()).unwrap()
                })
            })
        }

        fn metadata() -> impl Strategy<Value = Metadata> {
            proptest::collection::btree_map("\\PC{0,6}", "\\PC{0,12}", 0..4)
        }

        proptest! {
            #[test]
            fn any_container_round_trips(
                header in metadata(),
                records in proptest::collection::vec((metadata(), proptest::collection::vec(array(), 0..3)), 0..3),
            ) {
                let c = Container {
                    header,
                    records: records.into_iter().map(|(metadata, arrays)| Record { metadata, arrays }).collect(),
                };
                let bytes = c.encode().unwrap();
                let back = Container::decode(&bytes).unwrap();
                // compare encodings: NaN payloads break PartialEq but must survive bit-exactly
                prop_assert_eq!(back.encode().unwrap(), bytes);
            }
        }
    }
}
