use crate::image::ImageGrid;

/// Planar (channel-major) activation volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Planar copy of an interleaved image.
    pub fn from_image(image: &ImageGrid) -> Self {
        let (w, h, ch) = (image.width(), image.height(), image.channels());
        let mut t = Tensor::zeros(ch, h, w);
        for (p, px) in image.data().chunks_exact(ch).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                t.data[c * w * h + p] = v;
            }
        }
        t
    }

    /// Interleaved copy; the tensor must have 1 or 3 channels.
    pub fn to_image(&self) -> ImageGrid {
        let (w, h, ch) = (self.width, self.height, self.channels);
        let mut data = vec![0.0; w * h * ch];
        for c in 0..ch {
            for (p, &v) in self.plane(c).iter().enumerate() {
                data[p * ch + c] = v;
            }
        }
        ImageGrid::from_vec(w, h, ch, data).expect("tensor has 1 or 3 channels")
    }
}
