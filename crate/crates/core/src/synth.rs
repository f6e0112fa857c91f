//! Seeded procedural images for demos and tests: one flat shape on a
//! background, one shape family per category.
//!
//! Foreground and background colors come from three palettes shared across
//! families (family `k` uses palette `k % 3`), so color alone does not
//! identify a family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::Category;
use crate::imagecore::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Disk,
    Rectangle,
    Cross,
    Ring,
    Triangle,
    Ellipse,
    Diamond,
    LShape,
    Bars,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 9] = [
        ShapeKind::Disk,
        ShapeKind::Rectangle,
        ShapeKind::Cross,
        ShapeKind::Ring,
        ShapeKind::Triangle,
        ShapeKind::Ellipse,
        ShapeKind::Diamond,
        ShapeKind::LShape,
        ShapeKind::Bars,
    ];

    pub fn index(self) -> usize {
        ShapeKind::ALL.iter().position(|&k| k == self).expect("listed")
    }

    /// The category this family stands for in synthetic corpora.
    pub fn category(self) -> Category {
        Category::ALL[self.index()]
    }

    pub fn for_category(c: Category) -> ShapeKind {
        ShapeKind::ALL[c.code() as usize]
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Disk => "disk",
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::Cross => "cross",
            ShapeKind::Ring => "ring",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Ellipse => "ellipse",
            ShapeKind::Diamond => "diamond",
            ShapeKind::LShape => "lshape",
            ShapeKind::Bars => "bars",
        }
    }
}

const PALETTES: [([u8; 3], [u8; 3]); 3] = [
    ([200, 60, 50], [30, 40, 90]),
    ([60, 170, 80], [240, 230, 200]),
    ([230, 200, 40], [70, 70, 70]),
];

/// Default side of generated images.
pub const DEFAULT_SIDE: usize = 96;

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub kind: ShapeKind,
    pub image: RasterImage,
}

fn inside(kind: ShapeKind, x: f64, y: f64, s: f64, aspect: f64) -> bool {
    // Coordinates are relative to the shape center; `s` is the half-extent.
    let (ax, ay) = (x.abs(), y.abs());
    match kind {
        ShapeKind::Disk => x * x + y * y <= s * s,
        ShapeKind::Rectangle => ax <= s && ay <= s * aspect,
        ShapeKind::Cross => (ax <= s && ay <= s * 0.3) || (ay <= s && ax <= s * 0.3),
        ShapeKind::Ring => {
            let r2 = x * x + y * y;
            r2 <= s * s && r2 >= (0.55 * s) * (0.55 * s)
        }
        ShapeKind::Triangle => y <= s * 0.8 && y >= -s && ax <= (y + s) * 0.55,
        ShapeKind::Ellipse => (x / s).powi(2) + (y / (s * 0.45)).powi(2) <= 1.0,
        ShapeKind::Diamond => ax + ay <= s,
        ShapeKind::LShape => {
            let in_box = ax <= s && ay <= s;
            in_box && (x <= -s * 0.35 || y >= s * 0.35)
        }
        ShapeKind::Bars => {
            let in_box = ax <= s && ay <= s;
            in_box && ((x + s) / (s * 0.5)).floor() as i64 % 2 == 0
        }
    }
}

/// Renders one image of `kind` with random size, position, aspect, palette
/// brightness and pixel noise drawn from `rng`.
pub fn render(kind: ShapeKind, side: usize, rng: &mut impl Rng) -> RasterImage {
    let (fg, bg) = PALETTES[kind.index() % PALETTES.len()];
    let sf = side as f64;
    let s = sf * rng.gen_range(0.22..0.32);
    let margin = s * 1.1;
    let cy = rng.gen_range(margin..sf - margin);
    let cx = rng.gen_range(margin..sf - margin);
    let aspect = rng.gen_range(0.45..0.75);
    let shift: i16 = rng.gen_range(-25..=25);
    let jitter = |v: u8, n: i16| (v as i16 + shift + n).clamp(0, 255) as u8;
    let mut noise = Vec::with_capacity(side * side);
    for _ in 0..side * side {
        noise.push(rng.gen_range(-12i16..=12));
    }
    RasterImage::from_fn(side, side, |r, c| {
        let n = noise[r * side + c];
        let base = if inside(kind, c as f64 + 0.5 - cx, r as f64 + 0.5 - cy, s, aspect) { fg } else { bg };
        [jitter(base[0], n), jitter(base[1], n), jitter(base[2], n)]
    })
    .expect("side is positive")
}

/// `per_kind` images of every kind in `kinds`, interleaved by kind, all
/// drawn from one generator seeded with `seed`.
pub fn generate(kinds: &[ShapeKind], per_kind: usize, side: usize, seed: u64) -> Vec<SynthSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(kinds.len() * per_kind);
    for _ in 0..per_kind {
        for &kind in kinds {
            out.push(SynthSample { kind, image: render(kind, side, &mut rng) });
        }
    }
    out
}
