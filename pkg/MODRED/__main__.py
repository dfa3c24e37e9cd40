from MODRED.cli.CommandLine import main

main()
