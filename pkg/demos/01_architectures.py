#!/usr/bin/env python3
"""Walk through the two reference architectures.

Builds both networks for a 10-class head, prints the layer-by-layer shape
trace for a 1-second 8 kHz input, and compares parameter budgets.  The
multi-kernel variant routes the early feature map through three parallel
convolution branches (kernel sizes 4/8/16) whose outputs concatenate
channel-wise before the 2-D stage.
"""

from wavecnn import build_model

for variant in ("with_inception", "without_inception"):
    model = build_model(variant, num_classes=10)
    print(f"\n=== {variant} ===")
    for name, shape in model.trace_shapes():
        print(f"  {name:32s} -> {shape}")
    print(f"  total trainable parameters: {model.param_count():,}")

print("""
Notes
-----
- The 1-D stage downsamples 8000 samples to a few hundred steps with large
  strides; 'same' padding keeps the parallel branches length-compatible.
- The (channels, time) map is then relabeled as a one-channel image so that
  ordinary 3x3 convolutions can process it.
- The final conv emits one channel per class; global average pooling turns
  those channels into logits (pass dense_head=True to build_model for the
  flatten + fully-connected head instead).
""")
