import os
import sys

# Make dmd_forecasting and evaluation importable without installing the project
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
