"""emobench: workbench for sensing valence/arousal/dominance from monologue speech.

Pipeline stages: silence-based chunking, sentiment-quota selection, SAM-scale
annotation service, evaluator-weighted label aggregation, acoustic functional
features, epsilon-SVR training, and cross-validated evaluation with CCC-based
feature ranking.
"""

__version__ = "0.1.0"
