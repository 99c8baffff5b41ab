import unittest
from inventory import Store


class StoreTest(unittest.TestCase):
    def setUp(self):
        self.store = Store()
        self.store.add("apple", 3)

    def test_count(self):
        self.assertEqual(self.store.count("apple"), 3)

    def test_remove(self):
        self.store.remove("apple")
        self.assertEqual(self.store.count("apple"), 0)

    def summary(self):
        return self.store.total()


if __name__ == "__main__":
    unittest.main()
