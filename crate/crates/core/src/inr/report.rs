//! Trainable-parameter counts for the network family.

/// Layer widths of a network: Fourier frequencies, sine-layer widths and the
/// width of the affine head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub fourier_features: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    /// Largest configuration: 256 frequencies and five 256-wide sine layers.
    pub fn reference() -> Self {
        Self {
            fourier_features: 256,
            hidden: vec![256; 5],
        }
    }

    /// Weights and biases of the network with a head of width `outputs`.
    pub fn network_params(&self, outputs: usize) -> usize {
        let mut widths = vec![2 * self.fourier_features];
        widths.extend(&self.hidden);
        widths.push(outputs);
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// The classic-INR counterpart: one extra sine layer of the last hidden
    /// width, then a single output neuron.
    pub fn scalar_counterpart(&self) -> Self {
        let mut hidden = self.hidden.clone();
        hidden.push(*hidden.last().unwrap_or(&(2 * self.fourier_features)));
        Self {
            fourier_features: self.fourier_features,
            hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamsReport {
    pub materials: usize,
    /// Network weights and biases of the distribution model.
    pub distribution_network: usize,
    /// Attenuation vector entries.
    pub attenuation: usize,
    /// Network weights and biases of the scalar classic INR.
    pub scalar_network: usize,
}

impl ParamsReport {
    pub fn new(arch: &Architecture, materials: usize) -> Self {
        Self {
            materials,
            distribution_network: arch.network_params(materials),
            attenuation: materials,
            scalar_network: arch.scalar_counterpart().network_params(1),
        }
    }

    pub fn render(&self) -> String {
        format!(
            "model,network_params,attenuation_params,total\n\
             distribution(K={k}),{d},{a},{dt}\n\
             scalar,{s},0,{s}\n",
            k = self.materials,
            d = self.distribution_network,
            a = self.attenuation,
            dt = self.distribution_network + self.attenuation,
            s = self.scalar_network,
        )
    }
}
