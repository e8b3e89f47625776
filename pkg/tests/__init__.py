"""qmldesk tests."""
