"""gaitflow: optical-flow gait recognition.

Pipeline: dense optical flow between consecutive frames -> body-part patches
-> CNN gait descriptors -> PCA + nearest-neighbor identification and
verification, evaluated with Rank-k/CMC and ROC/EER.
"""

__version__ = "0.1.0"
