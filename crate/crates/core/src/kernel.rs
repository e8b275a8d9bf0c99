//! Point spread functions given by their Fourier transforms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::grid::{Fft2, GridField, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Identity,
    Sobolev,
}

/// A radial blur with `K̂(ω) > 0`, plus the declared ill-posedness pair `(L, β)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurKernel {
    family: KernelFamily,
    /// Exponent of the sobolev family (`K̂ = (1 + |ω|²)^{-β/2}`); 0 for identity.
    order: f64,
    l: f64,
    beta: f64,
}

impl BlurKernel {
    pub fn identity() -> Self {
        Self {
            family: KernelFamily::Identity,
            order: 0.0,
            l: 1.0,
            beta: 0.0,
        }
    }

    pub fn sobolev(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::config(format!("sobolev kernel needs β > 0, got {beta}")));
        }
        Ok(Self {
            family: KernelFamily::Sobolev,
            order: beta,
            l: 1.0,
            beta,
        })
    }

    /// Builds a family member with explicitly declared `(L, β)`; the
    /// declaration is not checked here, see [`BlurKernel::validate_assumption1`].
    pub fn with_declared(family: KernelFamily, order: f64, l: f64, beta: f64) -> Result<Self> {
        let mut k = match family {
            KernelFamily::Identity => Self::identity(),
            KernelFamily::Sobolev => Self::sobolev(order)?,
        };
        if !(l > 0.0) || !(beta >= 0.0) {
            return Err(Error::config(format!("declared L must be > 0 and β >= 0, got L={l}, β={beta}")));
        }
        k.l = l;
        k.beta = beta;
        Ok(k)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Short identifier used in provenance records.
    pub fn id(&self) -> String {
        match self.family {
            KernelFamily::Identity => "identity".to_string(),
            KernelFamily::Sobolev => format!("sobolev({})", self.order),
        }
    }

    /// `K̂` as a function of `|ω|²`.
    pub fn fourier_radial(&self, w2: f64) -> f64 {
        match self.family {
            KernelFamily::Identity => 1.0,
            KernelFamily::Sobolev => (1.0 + w2).powf(-0.5 * self.order),
        }
    }

    pub fn kernel_fourier(&self, omega: &Point) -> Complex64 {
        Complex64::new(self.fourier_radial(omega.norm_squared()), 0.0)
    }

    /// Checks `|K̂(ω)| ≥ L (1 + |ω|²)^{-β/2}` on the given frequencies.
    pub fn validate_assumption1<I>(&self, l: f64, beta: f64, omegas: I) -> AssumptionReport
    where
        I: IntoIterator<Item = Point>,
    {
        let mut min_ratio = f64::INFINITY;
        let mut worst = Point::zeros();
        for w in omegas {
            let w2 = w.norm_squared();
            let ratio = self.fourier_radial(w2) * (1.0 + w2).powf(0.5 * beta);
            if ratio < min_ratio {
                min_ratio = ratio;
                worst = w;
            }
        }
        AssumptionReport {
            declared_l: l,
            declared_beta: beta,
            min_ratio,
            worst_omega: worst,
            pass: min_ratio >= l * (1.0 - 1e-12),
        }
    }

    /// Assumption check for the kernel's own declaration over the whole lattice of `grid`.
    pub fn validate_on_lattice(&self, grid: &GridSpec) -> AssumptionReport {
        self.validate_assumption1(self.l, self.beta, lattice_points(grid))
    }

    /// Rough radius beyond which the kernel mass is negligible.
    pub fn effective_width(&self) -> f64 {
        match self.family {
            KernelFamily::Identity => 0.0,
            KernelFamily::Sobolev => 3.0,
        }
    }

    /// `K * f` by periodic convolution on the grid.
    ///
    /// `support_radius` bounds `|x|` over the support of `f`; the result is
    /// flagged when the kernel's effective width reaches the domain edge.
    pub fn blur_on_grid(&self, f: &GridField, support_radius: f64) -> BlurredField {
        let grid = *f.grid();
        let wrap_warning = support_radius + self.effective_width() > grid.extent();
        if self.family == KernelFamily::Identity {
            return BlurredField {
                field: f.clone(),
                wrap_warning,
            };
        }
        let n = grid.n();
        let fft = Fft2::new(n);
        let mut buf: Vec<Complex64> = f.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.forward(&mut buf);
        let w: Vec<f64> = (0..n).map(|i| grid.omega(i)).collect();
        let scale = 1.0 / (n * n) as f64;
        for iy in 0..n {
            for ix in 0..n {
                buf[iy * n + ix] *= self.fourier_radial(w[ix] * w[ix] + w[iy] * w[iy]) * scale;
            }
        }
        fft.inverse(&mut buf);
        let data = buf.iter().map(|z| z.re).collect();
        BlurredField {
            field: GridField::from_vec(grid, data).expect("same grid"),
            wrap_warning,
        }
    }
}

fn lattice_points(grid: &GridSpec) -> impl Iterator<Item = Point> + '_ {
    let n = grid.n();
    (0..n).flat_map(move |iy| (0..n).map(move |ix| Point::new(grid.omega(ix), grid.omega(iy))))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssumptionReport {
    pub declared_l: f64,
    pub declared_beta: f64,
    /// `min |K̂(ω)| (1 + |ω|²)^{β/2}` over the checked frequencies.
    pub min_ratio: f64,
    pub worst_omega: Point,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct BlurredField {
    pub field: GridField,
    pub wrap_warning: bool,
}
