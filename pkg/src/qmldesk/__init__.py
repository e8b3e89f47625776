"""
qmldesk - quantum machine learning on a desk.

A dense statevector simulator with a suite of quantum machine-learning
algorithms, each checked against a classical brute-force oracle.
"""

__version__ = "0.1.0"
__app_name__ = "qmldesk"
