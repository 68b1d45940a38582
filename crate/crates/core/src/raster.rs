//! Row-major float image grid with values in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value.clamp(0.0, 1.0); height * width * channels],
        }
    }

    /// Validates length, channel count and value range.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidRaster(format!(
                "expected {} values for {height}x{width}x{channels}, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidRaster(format!("value {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a raster from `f(y, x, c)`, clamping into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    #[inline]
    fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f32) {
        let i = self.index(y, x, c);
        self.data[i] = value.clamp(0.0, 1.0);
    }

    /// Applies `f` to every value, clamping the result into `[0, 1]`.
    pub fn map_values(&mut self, mut f: impl FnMut(usize, f32) -> f32) {
        for (i, v) in self.data.iter_mut().enumerate() {
            *v = f(i, *v).clamp(0.0, 1.0);
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Raster> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "crop {height}x{width} at ({y0}, {x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut out = Raster::zeros(height, width, self.channels);
        let row_len = width * self.channels;
        for y in 0..height {
            let src = self.index(y0 + y, x0, 0);
            let dst = y * row_len;
            out.data[dst..dst + row_len].copy_from_slice(&self.data[src..src + row_len]);
        }
        Ok(out)
    }

    pub fn paste(&mut self, tile: &Raster, y0: usize, x0: usize) -> Result<()> {
        if tile.channels != self.channels
            || y0 + tile.height > self.height
            || x0 + tile.width > self.width
        {
            return Err(Error::DimensionMismatch(format!(
                "cannot paste {}x{}x{} at ({y0}, {x0}) into {}x{}x{}",
                tile.height, tile.width, tile.channels, self.height, self.width, self.channels
            )));
        }
        let row_len = tile.width * self.channels;
        for y in 0..tile.height {
            let dst = self.index(y0 + y, x0, 0);
            let src = y * row_len;
            self.data[dst..dst + row_len].copy_from_slice(&tile.data[src..src + row_len]);
        }
        Ok(())
    }

    /// Bilinear value at continuous pixel coordinates, clamped to the border.
    fn bilinear(&self, y: f64, x: f64, c: usize) -> f64 {
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let dy = y - y0 as f64;
        let dx = x - x0 as f64;
        let v00 = self.get(y0, x0, c) as f64;
        let v01 = self.get(y0, x1, c) as f64;
        let v10 = self.get(y1, x0, c) as f64;
        let v11 = self.get(y1, x1, c) as f64;
        let top = v00 + (v01 - v00) * dx;
        let bottom = v10 + (v11 - v10) * dx;
        top + (bottom - top) * dy
    }

    /// RoiAlign-style crop: the box `[y0, y0+h) x [x0, x0+w)` is divided into
    /// `out_h x out_w` bins and each bin takes the bilinear sample at its
    /// center (half-pixel convention, one sample per bin).
    ///
    /// An integer-aligned box resampled at its own size is an exact copy; a
    /// box halved in each dimension is exactly 2x2 average pooling.
    pub fn roi_align(
        &self,
        y0: f64,
        x0: f64,
        h: f64,
        w: f64,
        out_h: usize,
        out_w: usize,
    ) -> Raster {
        let sy = h / out_h as f64;
        let sx = w / out_w as f64;
        let mut out = Raster::zeros(out_h, out_w, self.channels);
        for i in 0..out_h {
            let y = y0 + (i as f64 + 0.5) * sy - 0.5;
            for j in 0..out_w {
                let x = x0 + (j as f64 + 0.5) * sx - 0.5;
                for c in 0..self.channels {
                    let v = self.bilinear(y, x, c);
                    let k = out.index(i, j, c);
                    out.data[k] = (v as f32).clamp(0.0, 1.0);
                }
            }
        }
        out
    }

    pub fn resize(&self, out_h: usize, out_w: usize) -> Raster {
        if out_h == self.height && out_w == self.width {
            return self.clone();
        }
        self.roi_align(
            0.0,
            0.0,
            self.height as f64,
            self.width as f64,
            out_h,
            out_w,
        )
    }

    /// Largest centered square crop.
    pub fn center_square(&self) -> Raster {
        let side = self.height.min(self.width);
        let y0 = (self.height - side) / 2;
        let x0 = (self.width - side) / 2;
        self.crop(y0, x0, side, side)
            .expect("centered square fits by construction")
    }

    /// Separable Gaussian blur with standard deviation `sigma` pixels, kernel
    /// truncated at `ceil(3 sigma)` and renormalized, borders replicated.
    pub fn gaussian_blur(&self, sigma: f64) -> Raster {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let half = (kernel.len() / 2) as isize;
        let (h, w, ch) = (self.height, self.width, self.channels);
        let mut tmp = vec![0.0f64; h * w * ch];
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (k, weight) in kernel.iter().enumerate() {
                        let xx = (x as isize + k as isize - half).clamp(0, w as isize - 1) as usize;
                        acc += weight * self.get(y, xx, c) as f64;
                    }
                    tmp[(y * w + x) * ch + c] = acc;
                }
            }
        }
        let mut out = Raster::zeros(h, w, ch);
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (k, weight) in kernel.iter().enumerate() {
                        let yy = (y as isize + k as isize - half).clamp(0, h as isize - 1) as usize;
                        acc += weight * tmp[(yy * w + x) * ch + c];
                    }
                    let i = out.index(y, x, c);
                    out.data[i] = (acc as f32).clamp(0.0, 1.0);
                }
            }
        }
        out
    }

    /// Round-trips every value through 8-bit quantization.
    pub fn quantize_u8(&mut self) {
        for v in &mut self.data {
            *v = (*v * 255.0).round() / 255.0;
        }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Raster> {
        Raster::from_vec(
            height,
            width,
            channels,
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }
}

/// Normalized 1-D Gaussian taps for `sigma`, truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Mean squared difference over all values.
pub fn mse_image(a: &Raster, b: &Raster) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    if a.data.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PuzzleRng;

    fn random_raster(seed: u64, h: usize, w: usize, c: usize) -> Raster {
        let mut rng = PuzzleRng::new(seed);
        Raster::from_fn(h, w, c, |_, _, _| rng.unit() as f32)
    }

    #[test]
    fn from_vec_rejects_out_of_range_and_bad_lengths() {
        assert!(Raster::from_vec(1, 1, 1, vec![1.5]).is_err());
        assert!(Raster::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Raster::from_vec(1, 1, 2, vec![0.0; 2]).is_err());
        assert!(Raster::from_vec(1, 2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn crop_then_paste_restores() {
        let img = random_raster(1, 8, 6, 3);
        let tile = img.crop(2, 1, 3, 4).unwrap();
        let mut canvas = Raster::zeros(8, 6, 3);
        canvas.paste(&tile, 2, 1).unwrap();
        assert_eq!(canvas.crop(2, 1, 3, 4).unwrap(), tile);
        assert!(img.crop(6, 0, 3, 1).is_err());
    }

    #[test]
    fn roi_align_at_native_size_is_exact_copy() {
        let img = random_raster(2, 64, 64, 3);
        let crop = img.roi_align(32.0, 0.0, 32.0, 32.0, 32, 32);
        assert_eq!(crop, img.crop(32, 0, 32, 32).unwrap());
    }

    #[test]
    fn roi_align_halving_is_average_pooling() {
        let img = random_raster(3, 32, 32, 1);
        let pooled = img.roi_align(0.0, 0.0, 32.0, 32.0, 16, 16);
        for i in 0..16 {
            for j in 0..16 {
                let avg = (img.get(2 * i, 2 * j, 0) as f64
                    + img.get(2 * i + 1, 2 * j, 0) as f64
                    + img.get(2 * i, 2 * j + 1, 0) as f64
                    + img.get(2 * i + 1, 2 * j + 1, 0) as f64)
                    / 4.0;
                assert!((pooled.get(i, j, 0) as f64 - avg).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn blur_keeps_constant_image() {
        let img = Raster::filled(20, 20, 3, 0.4);
        let blurred = img.gaussian_blur(2.0);
        for v in blurred.data() {
            assert!((v - 0.4).abs() < 1e-6);
        }
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(1.5);
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..k.len() {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    #[test]
    fn mse_examples() {
        let a = random_raster(4, 5, 7, 3);
        assert_eq!(mse_image(&a, &a).unwrap(), 0.0);
        let zeros = Raster::zeros(4, 4, 3);
        let ones = Raster::filled(4, 4, 3, 1.0);
        assert_eq!(mse_image(&zeros, &ones).unwrap(), 1.0);
        assert!(matches!(
            mse_image(&zeros, &Raster::zeros(4, 4, 1)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn mse_matches_naive_loop() {
        let a = random_raster(5, 9, 11, 3);
        let b = random_raster(6, 9, 11, 3);
        let mut naive = 0.0f64;
        for y in 0..9 {
            for x in 0..11 {
                for c in 0..3 {
                    let d = a.get(y, x, c) as f64 - b.get(y, x, c) as f64;
                    naive += d * d;
                }
            }
        }
        naive /= (9 * 11 * 3) as f64;
        assert!((mse_image(&a, &b).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn u8_round_trip_is_exact_after_quantization() {
        let mut img = random_raster(7, 6, 6, 3);
        img.quantize_u8();
        let bytes = img.to_u8();
        assert_eq!(Raster::from_u8(6, 6, 3, &bytes).unwrap(), img);
    }
}
