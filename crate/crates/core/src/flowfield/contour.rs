use crate::error::Result;
use crate::flowfield::{discretize_angles, edge_distance, etf, AngleSetImage, DirectionField, EtfParams};
use crate::image::{ImageGrid, Mask};

/// How guidance lines are painted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LinePolarity {
    /// Lines are values below 0.5 (dark lines on a light background).
    #[default]
    DarkOnLight,
    /// Lines are values at or above 0.5.
    LightOnDark,
}

/// Screen-space guidance flow for one viewpoint.
#[derive(Clone, Debug)]
pub struct ContourFlow {
    /// ETF of the edge-distance image.
    pub field: DirectionField,
    /// Discretized field; background pixels are excluded.
    pub angles: AngleSetImage,
}

/// Edge image (1 = line pixel) of a rendered guidance texture. Only
/// foreground pixels can be edges.
pub fn binarize_guidance(rendered: &ImageGrid, foreground: &Mask, polarity: LinePolarity) -> ImageGrid {
    let gray = rendered.to_gray();
    ImageGrid::from_fn(gray.width(), gray.height(), 1, |x, y, _| {
        let v = gray.get(x, y, 0);
        let line = match polarity {
            LinePolarity::DarkOnLight => v < 0.5,
            LinePolarity::LightOnDark => v >= 0.5,
        };
        if foreground.get(x, y) && line {
            1.0
        } else {
            0.0
        }
    })
}

/// Binarize -> distance to nearest line -> ETF -> angle bins.
///
/// A fully background render yields an all-excluded result. A render with
/// foreground but no line pixels is an error
/// ([`Error::NoGuidanceLines`](crate::Error::NoGuidanceLines)).
pub fn contour_direction_field(
    rendered: &ImageGrid,
    foreground: &Mask,
    params: EtfParams,
    tau_step: f64,
    polarity: LinePolarity,
) -> Result<ContourFlow> {
    let (w, h) = (rendered.width(), rendered.height());
    if foreground.count() == 0 {
        return Ok(ContourFlow {
            field: DirectionField::new(w, h, vec![0.0; w * h], vec![0.0; w * h]),
            angles: AngleSetImage::excluded(w, h, tau_step)?,
        });
    }
    let edges = binarize_guidance(rendered, foreground, polarity);
    let distance = edge_distance(&edges)?;
    let field = etf(&distance, params);
    let all = discretize_angles(&field, tau_step)?;
    let bins = all
        .bins()
        .iter()
        .zip(foreground.data())
        .map(|(b, &fg)| if fg { *b } else { None })
        .collect();
    Ok(ContourFlow {
        angles: AngleSetImage::new(w, h, tau_step, bins)?,
        field,
    })
}

/// Debug rendering of a direction field: hue = twice the angle, full
/// saturation, value = magnitude normalized by its maximum.
pub fn direction_field_rgb(field: &DirectionField) -> ImageGrid {
    let max = field.magnitudes().iter().cloned().fold(0.0, f64::max);
    ImageGrid::from_fn(field.width(), field.height(), 3, |x, y, c| {
        let v = if max > 0.0 { field.magnitude(x, y) / max } else { 0.0 };
        let hue = 2.0 * field.angle(x, y) / (2.0 * std::f64::consts::PI) * 6.0;
        let sector = hue.floor() as i32 % 6;
        let f = hue - hue.floor();
        let (p, q, t) = (0.0, v * (1.0 - f), v * f);
        let rgb = match sector {
            0 => [v, t, p],
            1 => [q, v, p],
            2 => [p, v, t],
            3 => [p, q, v],
            4 => [t, p, v],
            _ => [v, p, q],
        };
        rgb[c]
    })
}
