//! Occupancy images: PGM grayscale and PNG with the trajectory in red.

use crate::grid::{trace_ray, GridMap};
use crate::pose::{CellIndex, Pose2D};
use std::io::{self, Write};

pub fn render_pgm<W: Write>(map: &GridMap, out: W) -> io::Result<()> {
    map.write_pgm(out)
}

fn gray(map: &GridMap, i: usize, j: usize) -> u8 {
    (255.0 * (1.0 - map.probability(CellIndex::new(i as i32, j as i32)))).floor() as u8
}

/// RGB PNG of the map with the trajectory drawn as a red polyline.
pub fn render_png<W: Write>(map: &GridMap, trajectory: &[Pose2D], out: W) -> io::Result<()> {
    let (w, h) = (map.width(), map.height());
    let mut rgb = vec![0u8; w * h * 3];
    for j in 0..h {
        for i in 0..w {
            let g = gray(map, i, j);
            let px = ((h - 1 - j) * w + i) * 3;
            rgb[px..px + 3].copy_from_slice(&[g, g, g]);
        }
    }
    let mut paint = |c: CellIndex| {
        if map.in_bounds(c) {
            let px = ((h - 1 - c.j as usize) * w + c.i as usize) * 3;
            rgb[px..px + 3].copy_from_slice(&[255, 0, 0]);
        }
    };
    let cells: Vec<CellIndex> = trajectory.iter().map(|p| map.world_to_cell(p.x, p.y)).collect();
    for pair in cells.windows(2) {
        trace_ray(pair[0], pair[1], &mut paint);
    }
    if let Some(&last) = cells.last() {
        paint(last);
    }
    let mut enc = png::Encoder::new(out, w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(io::Error::other)?;
    writer.write_image_data(&rgb).map_err(io::Error::other)?;
    writer.finish().map_err(io::Error::other)
}
