//! Independent checks on segment maps.

#![allow(dead_code)]

use forestcurve_core::grid::Grid;
use forestcurve_core::segmentation::{SegmentMap, OUTSIDE};

/// Every ROI pixel carries a segment id below the count, every non-ROI pixel
/// is OUTSIDE, every id is used, and each segment is one 4-connected piece
/// (checked by flood fill).
pub fn check_partition(map: &SegmentMap, roi: Option<&Grid<bool>>) -> Result<(), String> {
    let labels = map.labels();
    let (w, h) = labels.dims();
    let n = map.segment_count();
    let mut sizes = vec![0usize; n];
    for (i, &l) in labels.as_slice().iter().enumerate() {
        let inside = roi.is_none_or(|r| r.as_slice()[i]);
        match (inside, l) {
            (true, OUTSIDE) => return Err(format!("ROI pixel {i} unlabelled")),
            (false, l) if l != OUTSIDE => {
                return Err(format!("pixel {i} outside ROI has label {l}"))
            }
            (true, l) if l as usize >= n => return Err(format!("pixel {i} has id {l} >= {n}")),
            (true, l) => sizes[l as usize] += 1,
            _ => {}
        }
    }
    if let Some(id) = sizes.iter().position(|&s| s == 0) {
        return Err(format!("segment {id} is empty"));
    }
    let mut seen = vec![false; w * h];
    let mut pieces = vec![0usize; n];
    for start in 0..w * h {
        let id = labels.as_slice()[start];
        if id == OUTSIDE || seen[start] {
            continue;
        }
        pieces[id as usize] += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !seen[j] && labels.as_slice()[j] == id {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
    }
    if let Some(id) = pieces.iter().position(|&p| p != 1) {
        return Err(format!("segment {id} has {} connected pieces", pieces[id]));
    }
    Ok(())
}

pub fn count_in_band(map: &SegmentMap, k: usize) -> Result<(), String> {
    let n = map.segment_count();
    if 2 * n < k || n > 2 * k {
        return Err(format!("{n} segments for k={k}"));
    }
    Ok(())
}
