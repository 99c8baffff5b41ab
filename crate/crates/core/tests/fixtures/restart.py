from framework import Base


def make_second():
    class Second(Base):
        def run(self):
            return self.other()
    return Second


class First(Base):
    def __init__(self):
        self.helper = 1

    def go(self):
        self.register(make_second)
        return self.helper
