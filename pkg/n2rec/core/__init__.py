"""Core modules for check-in data, training and evaluation"""
