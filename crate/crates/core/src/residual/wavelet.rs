//! Periodized orthogonal 2-D discrete wavelet transform (Daubechies-8).
//!
//! Odd-sized levels are padded by edge replication and cropped back on
//! reconstruction, so every operation here is linear in the input plane.

/// Daubechies-8 (16 taps) low-pass analysis filter.
pub const DB8_LOW: [f64; 16] = [
    -0.00011747678400228192,
    0.0006754494059985568,
    -0.0003917403729959771,
    -0.00487035299301066,
    0.008746094047015655,
    0.013981027917015516,
    -0.04408825393106472,
    -0.01736930100202211,
    0.128747426620186,
    0.00047248457399797254,
    -0.2840155429624281,
    -0.015829105256023893,
    0.5853546836548691,
    0.6756307362980128,
    0.3128715909144659,
    0.05441584224308161,
];

/// Quadrature-mirror high-pass companion of [`DB8_LOW`].
pub fn db8_high() -> [f64; 16] {
    let mut g = [0.0; 16];
    let n = DB8_LOW.len();
    for (k, gk) in g.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *gk = sign * DB8_LOW[n - 1 - k];
    }
    g
}

/// Row-major single-channel plane in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(height: usize, width: usize) -> Self {
        Plane {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn pad_even(&self) -> Plane {
        let h = self.height + self.height % 2;
        let w = self.width + self.width % 2;
        if h == self.height && w == self.width {
            return self.clone();
        }
        let mut out = Plane::zeros(h, w);
        for y in 0..h {
            let sy = y.min(self.height - 1);
            for x in 0..w {
                out.data[y * w + x] = self.at(sy, x.min(self.width - 1));
            }
        }
        out
    }

    fn crop(&self, height: usize, width: usize) -> Plane {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Plane::zeros(height, width);
        for y in 0..height {
            out.data[y * width..(y + 1) * width]
                .copy_from_slice(&self.data[y * self.width..y * self.width + width]);
        }
        out
    }
}

/// Detail subbands of one decomposition level.
#[derive(Debug, Clone)]
pub struct DetailLevel {
    /// Size of the level input before even-padding.
    pub input_height: usize,
    pub input_width: usize,
    pub bands: [Plane; 3],
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Finest level first.
    pub levels: Vec<DetailLevel>,
    pub approx: Plane,
}

fn analyze_1d(x: &[f64], lo: &[f64], hi: &[f64], a: &mut [f64], d: &mut [f64]) {
    let n = x.len();
    for i in 0..n / 2 {
        let (mut sa, mut sd) = (0.0, 0.0);
        for k in 0..lo.len() {
            let v = x[(2 * i + k) % n];
            sa += lo[k] * v;
            sd += hi[k] * v;
        }
        a[i] = sa;
        d[i] = sd;
    }
}

fn synthesize_1d(a: &[f64], d: &[f64], lo: &[f64], hi: &[f64], x: &mut [f64]) {
    let n = x.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n / 2 {
        for k in 0..lo.len() {
            x[(2 * i + k) % n] += lo[k] * a[i] + hi[k] * d[i];
        }
    }
}

/// One analysis level on an even-sized plane: returns `(LL, [LH, HL, HH])`.
fn analyze_2d(p: &Plane, lo: &[f64], hi: &[f64]) -> (Plane, [Plane; 3]) {
    let (h, w) = (p.height, p.width);
    let (h2, w2) = (h / 2, w / 2);
    let mut low = Plane::zeros(h, w2);
    let mut high = Plane::zeros(h, w2);
    for y in 0..h {
        analyze_1d(
            &p.data[y * w..(y + 1) * w],
            lo,
            hi,
            &mut low.data[y * w2..(y + 1) * w2],
            &mut high.data[y * w2..(y + 1) * w2],
        );
    }
    let columns = |src: &Plane| {
        let mut a = Plane::zeros(h2, w2);
        let mut d = Plane::zeros(h2, w2);
        let mut col = vec![0.0; h];
        let mut ca = vec![0.0; h2];
        let mut cd = vec![0.0; h2];
        for x in 0..w2 {
            for y in 0..h {
                col[y] = src.data[y * w2 + x];
            }
            analyze_1d(&col, lo, hi, &mut ca, &mut cd);
            for y in 0..h2 {
                a.data[y * w2 + x] = ca[y];
                d.data[y * w2 + x] = cd[y];
            }
        }
        (a, d)
    };
    let (ll, lh) = columns(&low);
    let (hl, hh) = columns(&high);
    (ll, [lh, hl, hh])
}

fn synthesize_2d(ll: &Plane, bands: &[Plane; 3], lo: &[f64], hi: &[f64]) -> Plane {
    let (h2, w2) = (ll.height, ll.width);
    let (h, w) = (2 * h2, 2 * w2);
    let columns = |a: &Plane, d: &Plane| {
        let mut out = Plane::zeros(h, w2);
        let mut ca = vec![0.0; h2];
        let mut cd = vec![0.0; h2];
        let mut col = vec![0.0; h];
        for x in 0..w2 {
            for y in 0..h2 {
                ca[y] = a.data[y * w2 + x];
                cd[y] = d.data[y * w2 + x];
            }
            synthesize_1d(&ca, &cd, lo, hi, &mut col);
            for y in 0..h {
                out.data[y * w2 + x] = col[y];
            }
        }
        out
    };
    let low = columns(ll, &bands[0]);
    let high = columns(&bands[1], &bands[2]);
    let mut out = Plane::zeros(h, w);
    for y in 0..h {
        synthesize_1d(
            &low.data[y * w2..(y + 1) * w2],
            &high.data[y * w2..(y + 1) * w2],
            lo,
            hi,
            &mut out.data[y * w..(y + 1) * w],
        );
    }
    out
}

/// Multi-level forward transform.
pub fn decompose(plane: &Plane, levels: usize) -> Decomposition {
    let hi = db8_high();
    let mut current = plane.clone();
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        let padded = current.pad_even();
        let (ll, bands) = analyze_2d(&padded, &DB8_LOW, &hi);
        out.push(DetailLevel {
            input_height: current.height,
            input_width: current.width,
            bands,
        });
        current = ll;
    }
    Decomposition {
        levels: out,
        approx: current,
    }
}

/// Inverse of [`decompose`].
pub fn reconstruct(dec: &Decomposition) -> Plane {
    let hi = db8_high();
    let mut current = dec.approx.clone();
    for level in dec.levels.iter().rev() {
        let full = synthesize_2d(&current, &level.bands, &DB8_LOW, &hi);
        current = full.crop(level.input_height, level.input_width);
    }
    current
}
