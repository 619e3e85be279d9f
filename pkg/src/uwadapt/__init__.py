"""Underwater image enhancement via two-phase domain adaptation.

The package provides:

* image containers and color math (:mod:`uwadapt.imagecore`)
* a physical underwater image synthesizer over nine water types
  (:mod:`uwadapt.synthdata`)
* no-reference and full-reference quality metrics (:mod:`uwadapt.metrics`)
* the network zoo: translator, dense U-Net enhancer, patch critics,
  frozen feature taps, ranking backbone (:mod:`uwadapt.networks`)
* adversarial / content / task losses with gradient penalty
  (:mod:`uwadapt.losses`)
* rank-pretrained quality scoring (:mod:`uwadapt.ruiqa`)
* the two training phases, easy/hard splitter and lambda sweep
  (:mod:`uwadapt.adapt`)
* score-routed inference, ablations and checkpointing
  (:mod:`uwadapt.pipeline`)
"""

__version__ = "0.1.0"
