//! Connected-component labelling for class rasters.

use crate::rink::{SegClass, SegMap};

#[derive(Debug, Clone)]
pub struct Component {
    pub class: SegClass,
    pub area: u64,
    /// Area centroid in continuous pixel coordinates.
    pub centroid: [f64; 2],
    pub bbox: [u32; 4], // x0, y0, x1, y1 inclusive
    pub pixels: Vec<(u32, u32)>,
}

/// 4-connected components of every pixel of `class`.
pub fn connected_components(seg: &SegMap, class: SegClass) -> Vec<Component> {
    let w = seg.width as usize;
    let h = seg.height as usize;
    let idx = class.index();
    let mut visited = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();

    for start in 0..w * h {
        if visited[start] || seg.data[start] != idx {
            continue;
        }
        let mut pixels = Vec::new();
        let mut sum = [0.0f64; 2];
        let mut bbox = [u32::MAX, u32::MAX, 0u32, 0u32];
        stack.push(start);
        visited[start] = true;
        while let Some(p) = stack.pop() {
            let x = (p % w) as u32;
            let y = (p / w) as u32;
            pixels.push((x, y));
            sum[0] += x as f64 + 0.5;
            sum[1] += y as f64 + 0.5;
            bbox[0] = bbox[0].min(x);
            bbox[1] = bbox[1].min(y);
            bbox[2] = bbox[2].max(x);
            bbox[3] = bbox[3].max(y);
            let mut try_push = |q: usize| {
                if !visited[q] && seg.data[q] == idx {
                    visited[q] = true;
                    stack.push(q);
                }
            };
            if x > 0 {
                try_push(p - 1);
            }
            if (x as usize) < w - 1 {
                try_push(p + 1);
            }
            if y > 0 {
                try_push(p - w);
            }
            if (y as usize) < h - 1 {
                try_push(p + w);
            }
        }
        let area = pixels.len() as u64;
        out.push(Component {
            class,
            area,
            centroid: [sum[0] / area as f64, sum[1] / area as f64],
            bbox,
            pixels,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rink::{preset_spec, rasterize, RinkPreset};

    #[test]
    fn nhl_template_has_expected_component_counts() {
        let map = rasterize(&preset_spec(RinkPreset::Nhl), 400, 170);
        assert_eq!(connected_components(&map, SegClass::OuterFaceoffCircles).len(), 4);
        assert_eq!(connected_components(&map, SegClass::InnerFaceoffSpots).len(), 4);
        assert_eq!(connected_components(&map, SegClass::BlueLines).len(), 2);
        // the circle sits above the centre line in the z-order, so it stays whole
        assert_eq!(connected_components(&map, SegClass::CenterFaceoffCircle).len(), 1);
        // while the centre line is cut in two by the circle
        assert_eq!(connected_components(&map, SegClass::CenterLine).len(), 2);
        assert_eq!(connected_components(&map, SegClass::GoalCreases).len(), 2);
    }

    #[test]
    fn centroid_of_outer_circle_is_its_centre() {
        let spec = preset_spec(RinkPreset::Nhl);
        let map = rasterize(&spec, 400, 170);
        let comps = connected_components(&map, SegClass::OuterFaceoffCircles);
        for c in &comps {
            let expect_x = [
                200.0 + 21.0312 / map.pixel_scale,
                200.0 - 21.0312 / map.pixel_scale,
            ];
            let dx = expect_x
                .iter()
                .map(|e| (c.centroid[0] - e).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(dx < 1.0, "{:?}", c.centroid);
        }
    }
}
