from params import DELTA


def compute():
    base = 80.0
    return base + DELTA


def main():
    print(f"final_acc={compute()}")


if __name__ == "__main__":
    main()
