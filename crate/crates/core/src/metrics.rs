//! Rate, distortion and verification metrics, plus the CSV row schema.
//!
//! Distortion is measured on 8-bit samples: both images are rounded to
//! `[0, 255]` first, so figures match what a viewer of the decoded file sees.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::feature::FeatureVector;
use crate::image::Image;

/// PSNR reported for identical images (the true value is infinite).
pub const PSNR_CAP_DB: f64 = 99.0;

pub const CSV_HEADER: &str = "image_id,mode,total_bits,bpp,psnr_db,mse,mae,embed_l2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Base,
    Coarse,
    Full,
}

/// One CSV row. Distortion columns are empty for `base` rows, which carry
/// no image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub image_id: String,
    pub mode: Mode,
    pub total_bits: u64,
    pub bpp: f64,
    pub psnr_db: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub embed_l2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub mse: f64,
    pub mae: f64,
    pub psnr_db: f64,
}

pub fn distortion(a: &Image, b: &Image) -> Result<Distortion> {
    a.same_shape(b)?;
    let (mut se, mut ae) = (0.0f64, 0.0f64);
    for (x, y) in a.to_u8().into_iter().zip(b.to_u8()) {
        let d = f64::from(x) - f64::from(y);
        se += d * d;
        ae += d.abs();
    }
    let n = a.data().len() as f64;
    let mse = se / n;
    Ok(Distortion { mse, mae: ae / n, psnr_db: psnr_from_mse(mse) })
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(distortion(a, b)?.psnr_db)
}

pub fn bits_per_pixel(stream_bytes: usize, width: usize, height: usize) -> Result<f64> {
    let pixels = width * height;
    if pixels == 0 {
        return Err(invalid("bits per pixel of an empty image"));
    }
    Ok(8.0 * stream_bytes as f64 / pixels as f64)
}

pub fn embedding_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid(format!("feature lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Best single threshold over `(distance, same)` pairs.
///
/// Candidates are the midpoints of consecutive sorted distances; a pair is
/// classified "same" when its distance is at most the threshold. Returns
/// `(threshold, accuracy)`, preferring the smallest threshold on ties.
pub fn verification_accuracy(pairs: &[(f64, bool)]) -> Result<(f64, f64)> {
    let same_total = pairs.iter().filter(|p| p.1).count();
    let diff_total = pairs.len() - same_total;
    if same_total == 0 || diff_total == 0 {
        return Err(Error::DegenerateProtocol("need at least one same and one different pair".into()));
    }
    if pairs.iter().any(|p| !p.0.is_finite()) {
        return Err(invalid("non-finite distance"));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // same_below[k] = number of "same" pairs among the k smallest distances
    let mut same_below = Vec::with_capacity(sorted.len() + 1);
    same_below.push(0usize);
    for p in &sorted {
        same_below.push(same_below.last().unwrap() + usize::from(p.1));
    }

    let mut best: Option<(f64, usize)> = None;
    for w in sorted.windows(2) {
        let threshold = (w[0].0 + w[1].0) / 2.0;
        let k = sorted.partition_point(|p| p.0 <= threshold);
        let correct = same_below[k] + (diff_total - (k - same_below[k]));
        if best.is_none_or(|(_, c)| correct > c) {
            best = Some((threshold, correct));
        }
    }
    let (threshold, correct) = best.expect("at least two pairs");
    Ok((threshold, correct as f64 / pairs.len() as f64))
}

/// One line of a verification pairs list.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PairsEntry {
    pub path_a: String,
    pub path_b: String,
    #[serde(deserialize_with = "bool_or_digit")]
    pub same: bool,
}

fn bool_or_digit<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim() {
        "1" | "true" | "same" => Ok(true),
        "0" | "false" | "diff" => Ok(false),
        other => Err(serde::de::Error::custom(format!("not a boolean: {other}"))),
    }
}

/// Reads a pairs CSV with header `path_a,path_b,same`.
pub fn read_pairs<R: Read>(reader: R) -> Result<Vec<PairsEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(invalid(format!("unexpected CSV header: {}", header.join(","))));
    }
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gray(values: &[u8]) -> Image {
        Image::from_u8(values.len(), 1, 1, values).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = gray(&[10, 20, 30, 40]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let b = gray(&[26, 36, 46, 56]);
        // 10·log10(65025 / 256)
        assert!((psnr(&a, &b).unwrap() - 24.048_403_955_560_61).abs() < 1e-9);
        assert!((psnr(&a, &b).unwrap() - 24.05).abs() < 0.005);
        let black = gray(&[0; 4]);
        let white = gray(&[255; 4]);
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        assert!(psnr(&a, &Image::from_u8(2, 2, 1, &[0; 4]).unwrap()).is_err());
    }

    #[test]
    fn distortion_columns() {
        let d = distortion(&gray(&[0, 0]), &gray(&[2, 4])).unwrap();
        assert_eq!(d.mse, 10.0);
        assert_eq!(d.mae, 3.0);
    }

    #[test]
    fn bpp_examples() {
        assert_eq!(bits_per_pixel(1000, 100, 100).unwrap(), 0.8);
        assert_eq!(bits_per_pixel(218, 160, 160).unwrap(), 0.068125);
        assert!(bits_per_pixel(10, 0, 5).is_err());
    }

    #[test]
    fn embedding_distance_examples() {
        let mut e1 = vec![0.0; 128];
        let mut e2 = vec![0.0; 128];
        e1[0] = 1.0;
        e2[1] = 1.0;
        let (a, b) = (FeatureVector::new(e1).unwrap(), FeatureVector::new(e2).unwrap());
        assert_eq!(embedding_distance(&a, &a).unwrap(), 0.0);
        assert!((embedding_distance(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let short = FeatureVector::new(vec![0.0; 3]).unwrap();
        assert!(embedding_distance(&a, &short).is_err());
    }

    #[test]
    fn verification_examples() {
        let sep = [(0.1, true), (0.2, true), (0.9, false), (1.0, false)];
        let (t, acc) = verification_accuracy(&sep).unwrap();
        assert_eq!(acc, 1.0);
        assert!((0.2..0.9).contains(&t));
        let flat = [(0.5, true), (0.5, false), (0.5, true), (0.5, false)];
        assert_eq!(verification_accuracy(&flat).unwrap().1, 0.5);
        assert!(matches!(
            verification_accuracy(&[(0.1, true), (0.2, true)]),
            Err(Error::DegenerateProtocol(_))
        ));
    }

    /// Exhaustive oracle: every midpoint, every pair re-classified.
    fn oracle(pairs: &[(f64, bool)]) -> (f64, f64) {
        let mut d: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        d.sort_by(f64::total_cmp);
        let mut best = (f64::NAN, -1.0);
        for i in 0..d.len() - 1 {
            let t = (d[i] + d[i + 1]) / 2.0;
            let correct = pairs.iter().filter(|p| (p.0 <= t) == p.1).count();
            let acc = correct as f64 / pairs.len() as f64;
            if acc > best.1 {
                best = (t, acc);
            }
        }
        best
    }

    #[test]
    fn verification_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let n = rng.gen_range(2..120);
            let mut pairs: Vec<(f64, bool)> = (0..n)
                .map(|_| {
                    let same = rng.gen_bool(0.5);
                    // coarse grid so ties happen
                    let d = f64::from(rng.gen_range(0..40u8)) / 20.0 + if same { 0.0 } else { 0.3 };
                    (d, same)
                })
                .collect();
            pairs[0].1 = true;
            pairs[1].1 = false;
            let got = verification_accuracy(&pairs).unwrap();
            let want = oracle(&pairs);
            assert_eq!(got.1, want.1);
            assert_eq!(got.0, want.0);
        }
    }

    #[test]
    fn csv_schema() {
        let rows = vec![
            MetricsRow {
                image_id: "a".into(),
                mode: Mode::Base,
                total_bits: 1744,
                bpp: 0.5,
                psnr_db: None,
                mse: None,
                mae: None,
                embed_l2: Some(0.01),
            },
            MetricsRow {
                image_id: "a".into(),
                mode: Mode::Full,
                total_bits: 9000,
                bpp: 2.5,
                psnr_db: Some(38.2),
                mse: Some(9.0),
                mae: Some(2.0),
                embed_l2: Some(0.01),
            },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().nth(1).unwrap(), "a,base,1744,0.5,,,,0.01");
        assert_eq!(read_metrics_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn pairs_file() {
        let text = "path_a,path_b,same\na.fvec,b.fvec,1\nc.fvec, d.fvec ,false\n";
        let pairs = read_pairs(text.as_bytes()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(pairs[0].same);
        assert_eq!(pairs[1].path_b, "d.fvec");
        assert!(!pairs[1].same);
        assert!(read_pairs("path_a,path_b,same\na,b,maybe\n".as_bytes()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn psnr_symmetric(pairs in proptest::collection::vec(any::<(u8, u8)>(), 1..50)) {
                let a: Vec<u8> = pairs.iter().map(|p| p.0).collect();
                let b: Vec<u8> = pairs.iter().map(|p| p.1).collect();
                let (x, y) = (gray(&a), gray(&b));
                prop_assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
                prop_assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);
            }
        }
    }
}
