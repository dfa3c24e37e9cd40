from MODRED.cli.CommandLine import main


if __name__ == "__main__":
    main()
