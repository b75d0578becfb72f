"""Temporal patient embeddings from bucketed longitudinal records.

Three recurrent encoders (vanilla LSTM, attention LSTM, time-aware LSTM) are
trained either as stage-discriminating embedding models or as end-to-end
mortality predictors, then evaluated intrinsically (t-SNE + Davies-Bouldin,
stage accuracy) and extrinsically (downstream logistic regression).
"""

__version__ = "0.1.0"
