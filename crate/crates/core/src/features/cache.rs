//! On-disk cache of style dictionaries, keyed by a content hash of
//! everything that determines them.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{DictionaryParams, Extractor, FeatureSet, RotatedStyleDictionary};
use crate::image::ImageGrid;

const MAGIC: &[u8; 4] = b"FTXD";
const VERSION: u32 = 1;

fn hash_image(h: &mut Sha256, img: &ImageGrid) {
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    h.update((img.channels() as u64).to_le_bytes());
    for v in img.data() {
        h.update(v.to_le_bytes());
    }
}

/// Hex digest over the style, mask, extractor weights and build parameters.
pub fn dictionary_key(style: &ImageGrid, mask: Option<&ImageGrid>, params: &DictionaryParams, extractor: &Extractor) -> String {
    let mut h = Sha256::new();
    hash_image(&mut h, style);
    match mask {
        Some(m) => {
            h.update([1]);
            hash_image(&mut h, m);
        }
        None => h.update([0]),
    }
    h.update(extractor.fingerprint());
    h.update(params.tau_step.to_le_bytes());
    h.update((params.etf.kernel_radius as u64).to_le_bytes());
    h.update((params.etf.iterations as u64).to_le_bytes());
    h.update((params.downsample as u64).to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_dictionary(d: &RotatedStyleDictionary) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&d.tau_step.to_le_bytes());
    buf.extend_from_slice(&(d.bin_count() as u32).to_le_bytes());
    buf.extend_from_slice(&d.region.to_le_bytes());
    buf.extend_from_slice(&(d.layer_dims.len() as u32).to_le_bytes());
    for &l in &d.layer_dims {
        buf.extend_from_slice(&(l as u32).to_le_bytes());
    }
    for m in &d.means {
        buf.extend_from_slice(&m.to_le_bytes());
    }
    for b in &d.bins {
        buf.extend_from_slice(&(b.len() as u64).to_le_bytes());
    }
    for b in &d.bins {
        for v in b.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.bytes.len() < N {
            return Err(Error::Cache("truncated dictionary".into()));
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_dictionary(bytes: &[u8]) -> Result<RotatedStyleDictionary> {
    let mut r = Reader { bytes };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Cache("not a dictionary file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Cache(format!("unsupported dictionary version {version}")));
    }
    let tau_step = r.f64()?;
    let bin_count = r.u32()? as usize;
    let region = r.u32()?;
    let layers = r.u32()? as usize;
    let layer_dims = (0..layers).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let dim: usize = layer_dims.iter().sum();
    let means = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let counts = (0..bin_count).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let mut bins = Vec::with_capacity(bin_count);
    let mut v = vec![0.0; dim];
    for n in counts {
        let mut set = FeatureSet::new(dim);
        for _ in 0..n {
            for x in v.iter_mut() {
                *x = r.f64()?;
            }
            set.push(&v)?;
        }
        bins.push(set);
    }
    if !r.bytes.is_empty() {
        return Err(Error::Cache("trailing bytes after dictionary".into()));
    }
    RotatedStyleDictionary::new(tau_step, layer_dims, means, bins, region)
        .map_err(|e| Error::Cache(e.to_string()))
}

/// Directory of cached dictionaries, one file per key.
#[derive(Clone, Debug)]
pub struct DictionaryCache {
    dir: PathBuf,
}

impl DictionaryCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.ftxd"))
    }

    /// Cached dictionary for `key`, if present and readable. A corrupt entry
    /// is logged and treated as a miss.
    pub fn load(&self, key: &str, region: u32) -> Option<RotatedStyleDictionary> {
        let path = self.path(key);
        let bytes = std::fs::read(&path).ok()?;
        match decode_dictionary(&bytes) {
            Ok(mut d) => {
                d.region = region;
                Some(d)
            }
            Err(e) => {
                log::warn!("ignoring cached dictionary {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store(&self, key: &str, d: &RotatedStyleDictionary) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path(key);
        write_atomic(&path, &encode_dictionary(d))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_extractor, ExtractorSpec};
    use crate::flowfield::EtfParams;

    fn sample() -> RotatedStyleDictionary {
        let bins = vec![
            FeatureSet::from_vectors(3, [vec![1.0, 2.0, 3.0], vec![-0.5, 0.0, 1e-300]]).unwrap(),
            FeatureSet::new(3),
            FeatureSet::from_vectors(3, [vec![f64::MIN_POSITIVE, 7.0, -7.0]]).unwrap(),
            FeatureSet::new(3),
        ];
        RotatedStyleDictionary::new(45.0, vec![1, 2], vec![0.1, 0.2, 0.3], bins, 2).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let d = sample();
        assert_eq!(decode_dictionary(&encode_dictionary(&d)).unwrap(), d);
    }

    #[test]
    fn truncated_or_foreign_bytes_rejected() {
        let bytes = encode_dictionary(&sample());
        assert!(decode_dictionary(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_dictionary(b"nope").is_err());
    }

    #[test]
    fn store_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DictionaryCache::new(dir.path());
        assert!(cache.load("k", 0).is_none());
        cache.store("k", &sample()).unwrap();
        let d = cache.load("k", 5).unwrap();
        assert_eq!(d.region, 5);
        assert_eq!(d.bins, sample().bins);
    }

    #[test]
    fn key_depends_on_inputs() {
        let ex = build_extractor(&ExtractorSpec::builtin(1)).unwrap();
        let ex2 = build_extractor(&ExtractorSpec::builtin(2)).unwrap();
        let style = ImageGrid::filled(8, 8, 3, 0.5);
        let p = DictionaryParams {
            tau_step: 5.0,
            etf: EtfParams::new(10, 10),
            downsample: 4,
            region: 0,
        };
        let k = dictionary_key(&style, None, &p, &ex);
        assert_eq!(k, dictionary_key(&style, None, &p, &ex));
        assert_ne!(k, dictionary_key(&style, None, &p, &ex2));
        assert_ne!(k, dictionary_key(&style, None, &DictionaryParams { tau_step: 45.0, ..p }, &ex));
        assert_ne!(k, dictionary_key(&style, Some(&ImageGrid::filled(8, 8, 1, 1.0)), &p, &ex));
    }
}
