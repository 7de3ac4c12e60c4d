"""ICU in-hospital mortality pipeline.

Ingests MIMIC-shaped event CSVs, selects a first-stay adult cohort, builds
48x13 hourly feature tensors plus static severity features, trains an LSTM
classifier and a logistic-regression baseline, and reports
precision/recall/F1/AUC. A seeded synthetic generator produces
schema-faithful data for end-to-end verification.
"""

__version__ = "0.1.0"
