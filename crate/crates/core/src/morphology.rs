//! Cleanup of the raw cluster mask.
//!
//! Foreground is 8-connected and background 4-connected throughout.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Sets every background pixel that cannot reach the image border through
/// 4-connected background to foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();

    let seed = |x: usize, y: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        let i = y * w + x;
        if !bits[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        seed(x, h - 1, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        seed(w - 1, y, &mut outside, &mut queue);
    }

    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !bits[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
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

    let mut out = mask.clone();
    for (b, o) in out.bits_mut().iter_mut().zip(&outside) {
        *b = !o;
    }
    out
}

/// 8-connected foreground components as lists of pixel indices, in the
/// row-major order of their first pixel.
pub fn components(mask: &BinaryMask) -> Vec<Vec<usize>> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !bits[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Keeps only the largest 8-connected foreground component. Equal sizes are
/// resolved in favor of the component whose first pixel comes earliest in
/// row-major order.
pub fn keep_principal_component(mask: &BinaryMask) -> Result<BinaryMask> {
    let comps = components(mask);
    let mut largest: Option<&Vec<usize>> = None;
    for c in &comps {
        if largest.is_none_or(|l| c.len() > l.len()) {
            largest = Some(c);
        }
    }
    let keep = largest.ok_or(Error::EmptyMask)?;
    let mut out = BinaryMask::empty(mask.width(), mask.height())?;
    let bits = out.bits_mut();
    for &i in keep {
        bits[i] = true;
    }
    Ok(out)
}

/// Largest component followed by hole filling.
pub fn postprocess(mask: &BinaryMask) -> Result<BinaryMask> {
    Ok(fill_holes(&keep_principal_component(mask)?))
}
