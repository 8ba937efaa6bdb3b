"""Test package for CoreLedger."""