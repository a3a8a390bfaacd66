use crate::image::{ImageGrid, Mask};

/// Mean squared difference over horizontally and vertically adjacent pixel
/// pairs where both pixels are foreground, averaged over pairs and
/// channels. Returns the value and its gradient with respect to `image`;
/// with no eligible pair both are zero.
pub fn tv_loss(image: &ImageGrid, foreground: &Mask) -> (f64, ImageGrid) {
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    assert_eq!((foreground.width(), foreground.height()), (w, h), "mask size must match the image");
    let data = image.data();
    let fg = foreground.data();
    let mut pairs = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if !fg[p] {
                continue;
            }
            if x + 1 < w && fg[p + 1] {
                pairs.push((p, p + 1));
            }
            if y + 1 < h && fg[p + w] {
                pairs.push((p, p + w));
            }
        }
    }
    let mut grad = ImageGrid::new(w, h, ch);
    if pairs.is_empty() {
        return (0.0, grad);
    }
    let n = (pairs.len() * ch) as f64;
    let g = grad.data_mut();
    let mut sum = 0.0;
    for &(a, b) in &pairs {
        for c in 0..ch {
            let d = data[a * ch + c] - data[b * ch + c];
            sum += d * d;
            g[a * ch + c] += 2.0 * d / n;
            g[b * ch + c] -= 2.0 * d / n;
        }
    }
    (sum / n, grad)
}
