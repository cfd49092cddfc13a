use std::thread;

use super::model::PfadnModel;
use crate::classic::DemosaicResult;
use crate::error::{Error, Result};
use crate::image::{MosaicedImage, PlanarImage};

/// Smallest multiple of `tile` that is at least `n`.
pub fn padded_extent(n: usize, tile: usize) -> usize {
    n.div_ceil(tile) * tile
}

/// Replicate-pads a mosaic to `(ph, pw)`, copying from the last macro-pixel
/// row/column so every padded pixel keeps its filter orientation.
pub fn pad_preserving_parity(m: &MosaicedImage, ph: usize, pw: usize) -> Result<PlanarImage> {
    let (h, w) = (m.height(), m.width());
    if ph < h || pw < w || ph % 2 != 0 || pw % 2 != 0 {
        return Err(Error::DimensionMismatch(format!("cannot pad {h}x{w} to {ph}x{pw}")));
    }
    let src = |i: usize, n: usize| if i < n { i } else { n - 2 + i % 2 };
    Ok(PlanarImage::from_fn(ph, pw, |r, c| m.get(src(r, h), src(c, w))))
}

/// Demosaics a whole frame by independent tiles of the model's tile size.
/// Tiles are distributed over `jobs` threads; the result does not depend on
/// `jobs`.
pub fn demosaic_full_frame(model: &PfadnModel<f32>, frame: &MosaicedImage, jobs: usize) -> Result<DemosaicResult> {
    let t = model.config().tile;
    let (h, w) = (frame.height(), frame.width());
    let (ph, pw) = (padded_extent(h, t), padded_extent(w, t));
    let padded = pad_preserving_parity(frame, ph, pw)?;
    let cells: Vec<(usize, usize)> = (0..ph / t).flat_map(|i| (0..pw / t).map(move |j| (i, j))).collect();

    let run = |cells: &[(usize, usize)]| -> Result<Vec<((usize, usize), super::TilePrediction)>> {
        cells
            .iter()
            .map(|&(i, j)| Ok(((i, j), model.predict_tile(&padded.crop(i * t, j * t, t, t)?)?)))
            .collect()
    };
    let jobs = jobs.clamp(1, cells.len().max(1));
    let results = if jobs == 1 {
        run(&cells)?
    } else {
        let chunk = cells.len().div_ceil(jobs);
        thread::scope(|s| {
            let handles: Vec<_> = cells.chunks(chunk).map(|c| s.spawn(move || run(c))).collect();
            let mut all = Vec::with_capacity(cells.len());
            for h in handles {
                all.extend(h.join().expect("tile worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };

    let mut intensity = vec![0.0; h * w];
    let mut aolp = vec![0.0; h * w];
    for ((ci, cj), pred) in results {
        for r in 0..t {
            let y = ci * t + r;
            if y >= h {
                break;
            }
            for c in 0..t {
                let x = cj * t + c;
                if x >= w {
                    break;
                }
                intensity[y * w + x] = pred.intensity.get(r, c, 0);
                aolp[y * w + x] = pred.aolp.get(r, c, 0);
            }
        }
    }
    Ok(DemosaicResult {
        intensity: PlanarImage::new(h, w, 1, intensity)?,
        aolp: PlanarImage::new(h, w, 1, aolp)?,
        stokes: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfadn::PfadnConfig;

    #[test]
    fn camera_frame_grid() {
        assert_eq!(padded_extent(2448, 128), 2560);
        assert_eq!(padded_extent(2048, 128), 2048);
        assert_eq!((2560 / 128, 2048 / 128), (20, 16));
        assert_eq!(padded_extent(128, 128), 128);
    }

    #[test]
    fn padding_keeps_filter_phase() {
        let m = MosaicedImage::new(PlanarImage::from_fn(4, 6, |r, c| (r * 10 + c) as f64 / 100.0)).unwrap();
        let p = pad_preserving_parity(&m, 8, 8).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let (sr, sc) = ((p.get(r, c, 0) * 100.0).round() as usize / 10, (p.get(r, c, 0) * 100.0).round() as usize % 10);
                assert_eq!((sr % 2, sc % 2), (r % 2, c % 2));
            }
        }
    }

    #[test]
    fn single_tile_matches_predict_and_jobs_agree() {
        let model = PfadnModel::<f32>::init(PfadnConfig::reduced(), 2).unwrap();
        let img = PlanarImage::from_fn(16, 16, |r, c| ((r * 7 + c * 3) % 11) as f64 / 11.0);
        let frame = MosaicedImage::new(img.clone()).unwrap();
        let whole = demosaic_full_frame(&model, &frame, 1).unwrap();
        let direct = model.predict_tile(&img).unwrap();
        assert_eq!(whole.intensity, direct.intensity);
        assert_eq!(whole.aolp, direct.aolp);

        let big = MosaicedImage::new(PlanarImage::from_fn(34, 20, |r, c| ((r * 5 + c) % 13) as f64 / 13.0)).unwrap();
        let a = demosaic_full_frame(&model, &big, 1).unwrap();
        let b = demosaic_full_frame(&model, &big, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.height(), a.width()), (34, 20));
    }
}
